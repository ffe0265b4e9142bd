"""Lazy arrays and scalars over the runtime's object graph.

Every operation here only composes: it creates a new computed node over
existing handles and asks the runtime what type the node would produce,
which surfaces type errors at composition time. Nothing evaluates until
a value is actually demanded, by converting to a string, indexing,
taking `len()`, or calling `to_list()`/`value()`. Forcing happens at
most once per container; the decoded value is cached and every later
demand is served from the cache.

Scalar operands (`xs + 3`, `xs > 500000`) are not pasted into program
text. They become data leaves in their own right, so the composed
fragments stay constant-free and the graph mirrors what was written.
"""

from __future__ import annotations

from typing import Any, Callable, Iterable

from . import boundary
from .errors import ClientError
from .transport import Transport, default_transport
from .typetext import FLOAT_KINDS, INT_KINDS, Scalar, Type, Vec, parse_type
from .udf import Udf, translate

_UNSET = object()


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


class LazyScalar:
    """A single not-yet-computed value, such as a reduction's result."""

    def __init__(self, transport: Transport, handle: int, ty: Scalar):
        self._transport = transport
        self._handle = handle
        self._ty = ty
        self._cache: Any = _UNSET

    @property
    def type_text(self) -> str:
        return self._ty.render()

    @property
    def evaluated(self) -> bool:
        return self._cache is not _UNSET

    def value(self) -> Any:
        if self._cache is _UNSET:
            type_text, data = self._transport.evaluate(self._handle)
            self._cache = boundary.decode(data, type_text)
        return self._cache

    def free(self) -> None:
        self._transport.free(self._handle)

    def __str__(self) -> str:
        return str(self.value())

    def __repr__(self) -> str:
        if self.evaluated:
            return f"LazyScalar({self._cache!r})"
        return f"<LazyScalar {self.type_text} pending>"

    def __int__(self) -> int:
        return int(self.value())

    def __float__(self) -> float:
        return float(self.value())


class LazyArray:
    """A vector whose contents exist as an unevaluated computation."""

    def __init__(
        self,
        values: Iterable[Any] | None = None,
        elem_type: str = "i64",
        transport: Transport | None = None,
        *,
        _handle: int | None = None,
        _ty: Vec | None = None,
    ):
        self._transport = transport if transport is not None else default_transport()
        self._cache: list | None = None
        # Provenance of a comparison mask: (source array, operator text,
        # constant handle). Lets filter() emit the direct filter form.
        self._mask_origin: tuple["LazyArray", str, int] | None = None
        if _handle is not None:
            assert _ty is not None
            self._handle = _handle
            self._ty = _ty
            return
        if values is None:
            raise ClientError("LazyArray needs either values or an existing handle")
        self._ty = Vec(_parse_elem(elem_type))
        data = boundary.encode(list(values), self._ty)
        self._handle = self._transport.new_data(self._ty.render(), data)

    # --- introspection ---

    @property
    def elem_type(self) -> str:
        return self._ty.elem.render()

    @property
    def type_text(self) -> str:
        return self._ty.render()

    @property
    def evaluated(self) -> bool:
        return self._cache is not None

    def __repr__(self) -> str:
        if self._cache is not None:
            return f"LazyArray({self._cache!r})"
        return f"<LazyArray {self.type_text} pending>"

    # --- graph building ---

    def _derive(self, fragment: str, deps: list[int]) -> tuple[int, Type]:
        handle = self._transport.new_computed(deps, fragment)
        ty = parse_type(self._transport.object_type(handle))
        return handle, ty

    def _derived_array(self, fragment: str, deps: list[int]) -> "LazyArray":
        handle, ty = self._derive(fragment, deps)
        if not isinstance(ty, Vec):
            raise ClientError(f"expected a vector from {fragment!r}, got {ty.render()}")
        return LazyArray(transport=self._transport, _handle=handle, _ty=ty)

    def _scalar_leaf(self, value: Any) -> int:
        if not _is_number(value):
            raise ClientError(f"expected a number, got {type(value).__name__}")
        kind = self._ty.elem
        if not isinstance(kind, Scalar):
            raise ClientError(f"elements of {self.type_text} take no scalar operand")
        if kind.kind in INT_KINDS and isinstance(value, float):
            raise ClientError(f"cannot combine a float with {self.type_text}")
        if kind.kind in FLOAT_KINDS:
            value = float(value)
        return self._transport.new_data(kind.render(), boundary.encode(value, kind))

    def _elementwise(self, op: str, other) -> "LazyArray":
        if isinstance(other, LazyArray):
            return self._derived_array(
                "result(for({v0, v1}, vecbuilder[" + self.elem_type + "], "
                f"(b, i, x) => merge(b, x.0 {op} x.1)))",
                [self._handle, other._handle],
            )
        const = self._scalar_leaf(other)
        return self._derived_array(f"map(v0, (x) => x {op} v1)", [self._handle, const])

    # --- the lazy operations ---

    def add(self, other) -> "LazyArray":
        """Elementwise sum with a scalar or an equal-length array."""
        return self._elementwise("+", other)

    def mul(self, other) -> "LazyArray":
        """Elementwise product with a scalar or an equal-length array."""
        return self._elementwise("*", other)

    def greater_than(self, threshold) -> "LazyArray":
        """Boolean mask marking elements above a scalar threshold."""
        const = self._scalar_leaf(threshold)
        mask = self._derived_array("map(v0, (x) => x > v1)", [self._handle, const])
        mask._mask_origin = (self, ">", const)
        return mask

    def filter(self, mask: "LazyArray") -> "LazyArray":
        """Keep the elements whose mask entry is true.

        A mask produced by `greater_than` on this same array collapses
        into a single filter over the source; any other boolean array is
        applied positionally.
        """
        if not isinstance(mask, LazyArray):
            raise ClientError("filter() takes a boolean LazyArray mask")
        origin = mask._mask_origin
        if origin is not None and origin[0] is self:
            _, op, const = origin
            return self._derived_array(
                f"filter(v0, (x) => x {op} v1)", [self._handle, const]
            )
        if mask.elem_type != "bool":
            raise ClientError(f"mask must be vec[bool], not {mask.type_text}")
        return self._derived_array(
            "result(for({v0, v1}, vecbuilder[" + self.elem_type + "], "
            "(b, i, x) => if (x.1, merge(b, x.0), b)))",
            [self._handle, mask._handle],
        )

    mask_filter = filter

    def sum(self) -> LazyScalar:
        """Total of all elements, as an unevaluated scalar."""
        elem = self._ty.elem
        if not isinstance(elem, Scalar) or elem.kind == "bool":
            raise ClientError(f"cannot sum {self.type_text}")
        zero = "0.0" if elem.kind in FLOAT_KINDS else "0"
        handle, ty = self._derive(f"reduce(v0, {zero}, (x, y) => x + y)", [self._handle])
        assert isinstance(ty, Scalar)
        return LazyScalar(self._transport, handle, ty)

    def map(self, fn: Udf | Callable, signature: str | None = None) -> "LazyArray":
        """Apply a translated function to every element.

        Accepts a function already decorated with @weld, or any plain
        function together with its signature text.
        """
        if isinstance(fn, Udf):
            udf = fn
        elif signature is None:
            raise ClientError("map() needs a @weld function or an explicit signature text")
        else:
            udf = translate(fn, signature)
        if len(udf.signature.params) != 1:
            raise ClientError("map() needs a one-parameter function")
        if udf.signature.params[0] != self._ty.elem:
            raise ClientError(
                f"function takes {udf.signature.params[0].render()} "
                f"but the elements are {self.elem_type}"
            )
        deps = [self._handle]
        names = []
        for value, ty in udf.constants:
            names.append(f"v{len(deps)}")
            deps.append(self._transport.new_data(ty.render(), boundary.encode(value, ty)))
        return self._derived_array(f"map(v0, {udf.lambda_text(names)})", deps)

    # --- forcing ---

    def to_list(self) -> list:
        """Evaluate (at most once) and return the elements."""
        if self._cache is None:
            type_text, data = self._transport.evaluate(self._handle)
            self._cache = boundary.decode(data, type_text)
        return list(self._cache)

    def free(self) -> None:
        self._transport.free(self._handle)

    def __str__(self) -> str:
        return str(self.to_list())

    def __len__(self) -> int:
        return len(self.to_list())

    def __getitem__(self, index: int):
        return self.to_list()[index]

    def __iter__(self):
        return iter(self.to_list())

    # --- operator sugar ---

    def __add__(self, other) -> "LazyArray":
        return self.add(other)

    __radd__ = __add__

    def __mul__(self, other) -> "LazyArray":
        return self.mul(other)

    __rmul__ = __mul__

    def __gt__(self, threshold) -> "LazyArray":
        return self.greater_than(threshold)


def _parse_elem(text: str) -> Type:
    # Any marshalable type works as an element, including nested vectors
    # and structs; parse_type rejects the rest.
    return parse_type(text)
