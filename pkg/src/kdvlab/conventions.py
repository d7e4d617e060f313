"""Sign and branch conventions shared by every module.

The flows come in mirrored pairs, e^{-itH} / e^{+itH}, and the weighted
conjugations come in pairs e^{+ax} ... e^{-ax} / e^{-ax} ... e^{+ax}.  All
code refers to the two members of a pair through the constants below, never
through literal signs.

UPPER branch
    time flow e^{-itG} for t >= 0 (forward generator), weight conjugation
    e^{+ax} e^{-itH0} e^{-ax}.
LOWER branch
    time flow e^{+itG} for t >= 0 (negated generator), weight conjugation
    e^{-ax} e^{+itH0} e^{+ax}.

Both conjugated flows contract at rate a(4 - a^2) for t >= 0.
"""

UPPER = 1
LOWER = -1
BRANCHES = (UPPER, LOWER)

# coefficient in H = H0 + COUPLING * p V
COUPLING = 12.0

# H0 = -p^3 - 4p
H0_CUBIC = -1.0
H0_LINEAR = -4.0


def check_branch(branch):
    if branch not in BRANCHES:
        raise ValueError(f"branch must be +1 (upper) or -1 (lower), got {branch!r}")
    return int(branch)


def branch_name(branch):
    return "upper" if check_branch(branch) == UPPER else "lower"


def parse_branch(value):
    """Accept +1/-1, '+'/'-', 'upper'/'lower'."""
    if isinstance(value, str):
        v = value.strip().lower()
        if v in ("+", "+1", "1", "upper", "plus"):
            return UPPER
        if v in ("-", "-1", "lower", "minus"):
            return LOWER
        raise ValueError(f"unknown branch {value!r}")
    return check_branch(int(value))
