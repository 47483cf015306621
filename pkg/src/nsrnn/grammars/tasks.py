"""The five task grammars and their default parameters."""
from __future__ import annotations

from typing import Mapping

from .pcfg import GrammarError, Pcfg, Rule

TASK_DEFAULTS: dict[str, dict[str, float]] = {
    "marked-reversal": {"mu": 60.0},
    "unmarked-reversal": {"mu": 60.0},
    "padded-reversal": {"mu_c": 60.0, "mu_p": 30.0},
    "dyck": {"mu_s": 1.0, "mu_n": 40.0},
    "hardest-cfl": {"mu_c": 0.5, "mu_sf": 0.5, "mu_lf": 2.0, "p_s": 0.25, "mu_s": 1.5, "mu_n": 3.0},
}
TASKS = tuple(TASK_DEFAULTS)


def f(mu: float) -> float:
    """Continuation probability giving a mean of ``mu`` recursive expansions."""
    return mu / (mu + 1.0)


def f_complement(mu: float) -> float:
    """``1 - f(mu)``, computed without cancellation."""
    return 1.0 / (mu + 1.0)


def task_params(task: str, params: Mapping[str, float] | None = None) -> dict[str, float]:
    if task not in TASK_DEFAULTS:
        raise GrammarError(f"unknown task {task!r}; expected one of {TASKS}")
    merged = dict(TASK_DEFAULTS[task])
    for key, value in (params or {}).items():
        if key not in merged:
            raise GrammarError(f"task {task} has no parameter {key!r}")
        merged[key] = float(value)
    for key, value in merged.items():
        if not value > 0:
            raise GrammarError(f"parameter {key} must be positive, got {value}")
    if task == "hardest-cfl":
        if merged["mu_lf"] <= 1:
            raise GrammarError("mu_lf must exceed 1 (long fillers have at least one symbol)")
        if merged["p_s"] >= 1:
            raise GrammarError("p_s must be below 1")
    return merged


def _reversal(mu: float, base: tuple[str, ...]) -> list[Rule]:
    return [
        Rule("S", ("0", "S", "0"), 0.5 * f(mu)),
        Rule("S", ("1", "S", "1"), 0.5 * f(mu)),
        Rule("S", base, f_complement(mu)),
    ]


def build_task_grammar(task: str, params: Mapping[str, float] | None = None) -> Pcfg:
    p = task_params(task, params)
    if task == "marked-reversal":
        rules = _reversal(p["mu"], ("#",))
    elif task == "unmarked-reversal":
        rules = _reversal(p["mu"], ())
    elif task == "padded-reversal":
        fc, fp = f(p["mu_c"]), f(p["mu_p"])
        gc, gp = f_complement(p["mu_c"]), f_complement(p["mu_p"])
        rules = [
            Rule("S", ("0", "S", "0"), 0.5 * fc),
            Rule("S", ("1", "S", "1"), 0.5 * fc),
            Rule("S", ("T0",), 0.5 * gc),
            Rule("S", ("T1",), 0.5 * gc),
            Rule("T0", ("0", "T0"), fp),
            Rule("T0", (), gp),
            Rule("T1", ("1", "T1"), fp),
            Rule("T1", (), gp),
        ]
    elif task == "dyck":
        fs, fn = f(p["mu_s"]), f(p["mu_n"])
        gs, gn = f_complement(p["mu_s"]), f_complement(p["mu_n"])
        rules = [
            Rule("S", ("S", "T"), fs),
            Rule("S", ("T",), gs),
            Rule("T", ("(", "S", ")"), 0.5 * fn),
            Rule("T", ("[", "S", "]"), 0.5 * fn),
            Rule("T", ("(", ")"), 0.5 * gn),
            Rule("T", ("[", "]"), 0.5 * gn),
        ]
    else:
        rules = _hardest_cfl_rules(p)
    start = "S'" if task == "hardest-cfl" else "S"
    return Pcfg(start, rules)


def _hardest_cfl_rules(p: dict[str, float]) -> list[Rule]:
    fc, fsf, flf = f(p["mu_c"]), f(p["mu_sf"]), f(p["mu_lf"] - 1)
    gc, gsf, glf = f_complement(p["mu_c"]), f_complement(p["mu_sf"]), f_complement(p["mu_lf"] - 1)
    fs, fn, ps = f(p["mu_s"]), f(p["mu_n"]), p["p_s"]
    gs, gn = f_complement(p["mu_s"]), f_complement(p["mu_n"])
    rules = [
        Rule("S'", ("R", "$", "Q", "S", "L", ";"), 1.0),
        Rule("L", ("L'", ",", "U"), 1.0),
        Rule("L'", (",", "V", "L'"), fc),
        Rule("L'", (), gc),
        Rule("R", ("U", ",", "R'"), 1.0),
        Rule("R'", ("R'", "V", ","), fc),
        Rule("R'", (), gc),
        Rule("U", ("W", "U"), fsf),
        Rule("U", (), gsf),
        Rule("V", ("W", "V"), flf),
        Rule("V", ("W",), glf),
    ]
    rules += [Rule("W", (c,), 0.2) for c in "()[]$"]
    rules += [
        Rule("Q", ("L", ";", "R"), ps),
        Rule("Q", (), 1 - ps),
        Rule("S", ("S", "Q", "T"), fs),
        Rule("S", ("T",), gs),
        Rule("T", ("(", "Q", "S", "Q", ")"), 0.5 * fn),
        Rule("T", ("[", "Q", "S", "Q", "]"), 0.5 * fn),
        Rule("T", ("(", "Q", ")"), 0.5 * gn),
        Rule("T", ("[", "Q", "]"), 0.5 * gn),
    ]
    return rules


def task_alphabet(task: str) -> tuple[str, ...]:
    """Sorted terminal symbols of a task grammar."""
    return tuple(sorted(build_task_grammar(task).terminals))
