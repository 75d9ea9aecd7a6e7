"""
Functional expressions, weight functions and model specifications.

Drift and diffusion of a higher-order Markov process are functionals of the
history segment. They are described here as small expression trees so that a
model can be written down in a JSON run document and evaluated by
src.services.functionals.

Example - higher-order Ornstein-Uhlenbeck:

    drift     = -Param("theta") * MovingIntegral()
    diffusion = Param("sigma")

Any numeric field in a weight function may be a float or the name of a model
parameter. That is how parameter functions (the EWMA decay, polynomial weight
coefficients) are fitted through a handful of constants.
"""

from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

MAX_EXPR_DEPTH = 16
MAX_POLY_DEGREE = 10

# A weight coefficient: a literal number or a parameter name.
Coefficient = Union[float, str]


# -------------------------------- Weight functions --------------------------------


class ConstantWeight(BaseModel):
    """w(x) = c over the whole window."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["constant"] = "constant"
    c: Coefficient = 1.0


class ExponentialWeight(BaseModel):
    """
    w_t(x) = lam ** (x - (t - tau)).

    With lam < 1 this weights the OLDEST values highest, as the formula is
    written. `reverse=True` gives w_t(x) = lam ** (t - x), the usual recency
    weighting.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["exponential"] = "exponential"
    lam: Coefficient = Field(..., description="Decay base, > 0 and != 1")
    reverse: bool = False


class PolynomialWeight(BaseModel):
    """w(x) = sum_j coeffs[j] * u**j with u = (x - (t - tau)) / tau in [0, 1]."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["polynomial"] = "polynomial"
    coeffs: tuple[Coefficient, ...] = Field(..., min_length=1, max_length=MAX_POLY_DEGREE + 1)


WeightFunction = Annotated[
    Union[ConstantWeight, ExponentialWeight, PolynomialWeight],
    Field(discriminator="kind"),
]


# -------------------------------- Expression tree --------------------------------


def _as_expr(value: "FunctionalExpr | float | int") -> "FunctionalExpr":
    if isinstance(value, (int, float)):
        return Const(value=float(value))
    return value


class _ExprNode(BaseModel):
    """Shared behaviour: immutability and operator sugar for building trees."""

    model_config = ConfigDict(frozen=True)

    def __add__(self, other):
        return Add(terms=(self, _as_expr(other)))

    def __radd__(self, other):
        return Add(terms=(_as_expr(other), self))

    def __sub__(self, other):
        return Add(terms=(self, Neg(arg=_as_expr(other))))

    def __rsub__(self, other):
        return Add(terms=(_as_expr(other), Neg(arg=self)))

    def __mul__(self, other):
        return Mul(factors=(self, _as_expr(other)))

    def __rmul__(self, other):
        return Mul(factors=(_as_expr(other), self))

    def __neg__(self):
        return Neg(arg=self)

    def __pow__(self, exponent: float):
        return Pow(arg=self, exponent=float(exponent))


class Const(_ExprNode):
    kind: Literal["const"] = "const"
    value: float


class Param(_ExprNode):
    """A named entry of the model's parameter vector."""

    kind: Literal["param"] = "param"
    name: str = Field(..., min_length=1)


class CurrentValue(_ExprNode):
    """H_t(t), the right endpoint of the window."""

    kind: Literal["current"] = "current"


class MovingIntegral(_ExprNode):
    """Integral of H_t over the full window [t - tau, t] (unnormalised)."""

    kind: Literal["moving_integral"] = "moving_integral"


class WeightedMovingIntegral(_ExprNode):
    """
    Integral of w(x) * S(x) over the window.

    S is the state history (`source="state"`) or the auxiliary history of
    realised squared diffusion values (`source="sigma2"`) that the EWMA
    volatility model reads.
    """

    kind: Literal["weighted_integral"] = "weighted_integral"
    weight: WeightFunction
    source: Literal["state", "sigma2"] = "state"


class Add(_ExprNode):
    kind: Literal["add"] = "add"
    terms: tuple["FunctionalExpr", ...] = Field(..., min_length=1)


class Mul(_ExprNode):
    kind: Literal["mul"] = "mul"
    factors: tuple["FunctionalExpr", ...] = Field(..., min_length=1)


class Neg(_ExprNode):
    kind: Literal["neg"] = "neg"
    arg: "FunctionalExpr"


class Pow(_ExprNode):
    kind: Literal["pow"] = "pow"
    arg: "FunctionalExpr"
    exponent: float


class Sqrt(_ExprNode):
    """Square root; the argument is checked to be >= 0 at evaluation time."""

    kind: Literal["sqrt"] = "sqrt"
    arg: "FunctionalExpr"


FunctionalExpr = Annotated[
    Union[
        Const,
        Param,
        CurrentValue,
        MovingIntegral,
        WeightedMovingIntegral,
        Add,
        Mul,
        Neg,
        Pow,
        Sqrt,
    ],
    Field(discriminator="kind"),
]

for _node in (Add, Mul, Neg, Pow, Sqrt):
    _node.model_rebuild()


def mean(tau: float) -> Mul:
    """(1/tau) * MovingIntegral - the normalised moving average over the window."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return Mul(factors=(Const(value=1.0 / tau), MovingIntegral()))


def children(expr: FunctionalExpr) -> tuple:
    if isinstance(expr, Add):
        return expr.terms
    if isinstance(expr, Mul):
        return expr.factors
    if isinstance(expr, (Neg, Pow, Sqrt)):
        return (expr.arg,)
    return ()


def expr_depth(expr: FunctionalExpr) -> int:
    return 1 + max((expr_depth(c) for c in children(expr)), default=0)


def _weight_names(weight: ConstantWeight | ExponentialWeight | PolynomialWeight) -> set[str]:
    if isinstance(weight, ConstantWeight):
        values: tuple = (weight.c,)
    elif isinstance(weight, ExponentialWeight):
        values = (weight.lam,)
    else:
        values = weight.coeffs
    return {v for v in values if isinstance(v, str)}


def referenced_params(expr: FunctionalExpr) -> set[str]:
    """Names of every parameter the expression needs to be evaluated."""
    if isinstance(expr, Param):
        return {expr.name}
    if isinstance(expr, WeightedMovingIntegral):
        return _weight_names(expr.weight)
    names: set[str] = set()
    for child in children(expr):
        names |= referenced_params(child)
    return names


def uses_sigma2(expr: FunctionalExpr) -> bool:
    if isinstance(expr, WeightedMovingIntegral):
        return expr.source == "sigma2"
    return any(uses_sigma2(c) for c in children(expr))


# -------------------------------- Models --------------------------------


class Parameter(BaseModel):
    """One entry of the parameter vector, with optional bounds (None = unbounded)."""

    model_config = ConfigDict(frozen=True)

    value: float
    lower: float | None = None
    upper: float | None = None

    @model_validator(mode="after")
    def _check_bounds(self) -> "Parameter":
        if self.lower is not None and self.upper is not None and self.lower > self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")
        return self


class ModelSpec(BaseModel):
    """
    A higher-order Markov model: dy = drift(H_t) dt + diffusion(H_t) dW.

    `params` is the named parameter vector referenced by Param leaves (and by
    weight coefficients given as names).
    """

    model_config = ConfigDict(frozen=True)

    name: str = Field(default="custom", description="Family label, e.g. 'ho_ou'")
    tau: float = Field(..., gt=0, description="Order of the process")
    drift: FunctionalExpr
    diffusion: FunctionalExpr
    params: dict[str, Parameter] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_tree(self) -> "ModelSpec":
        for label, expr in (("drift", self.drift), ("diffusion", self.diffusion)):
            depth = expr_depth(expr)
            if depth > MAX_EXPR_DEPTH:
                raise ValueError(f"{label} expression depth {depth} exceeds {MAX_EXPR_DEPTH}")
            missing = referenced_params(expr) - set(self.params)
            if missing:
                raise ValueError(f"{label} references unknown parameters: {sorted(missing)}")
        return self

    @property
    def uses_sigma2(self) -> bool:
        """True when the model reads the auxiliary squared-diffusion history."""
        return uses_sigma2(self.drift) or uses_sigma2(self.diffusion)

    @property
    def param_values(self) -> dict[str, float]:
        return {name: p.value for name, p in self.params.items()}

    def with_params(self, values: dict[str, float]) -> "ModelSpec":
        """Copy of the model with some parameter values replaced (bounds kept)."""
        unknown = set(values) - set(self.params)
        if unknown:
            raise ValueError(f"unknown parameters: {sorted(unknown)}")
        params = {
            name: p.model_copy(update={"value": float(values[name])}) if name in values else p
            for name, p in self.params.items()
        }
        return self.model_copy(update={"params": params})
