"""Rendering of results: deterministic JSON, CSV draw tables and text tables."""

import json
import math
from pathlib import Path

import numpy as np
import pandas as pd


def to_jsonable(obj):
    """Plain JSON types; ±inf become "inf"/"-inf" strings and NaN becomes null."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def solution_draws_frame(draws: np.ndarray) -> pd.DataFrame:
    """Columns s, eta1..etan."""
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    frame = pd.DataFrame({"s": np.arange(draws.shape[0])})
    for i in range(draws.shape[1]):
        frame[f"eta{i + 1}"] = draws[:, i]
    return frame


def value_draws_frame(draws: np.ndarray) -> pd.DataFrame:
    draws = np.asarray(draws, dtype=float).ravel()
    return pd.DataFrame({"s": np.arange(draws.size), "value": draws})


def write_csv(frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def _fmt(value, width: int = 12) -> str:
    if value is None:
        return "—".rjust(width)
    if isinstance(value, bool):
        return ("yes" if value else "no").rjust(width)
    if isinstance(value, (int, np.integer)):
        return str(int(value)).rjust(width)
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}".rjust(width)
    return str(value).rjust(width)


def format_table(headers: list[str], rows: list[list], width: int = 12) -> str:
    """Fixed-width text table."""
    lines = ["".join(h.rjust(width) for h in headers)]
    lines.append("-" * (width * len(headers)))
    for row in rows:
        lines.append("".join(_fmt(v, width) for v in row))
    return "\n".join(lines)


def format_solution(solution: dict, title: str = "Solution") -> str:
    lines = [f"{title}: status {solution['status']}"]
    lines.append(f"  γ̂ = {solution['gamma_hat']}")
    lines.append(f"  θ̂ = {solution['theta_hat']}")
    lines.append(f"  KKT residual {solution.get('kkt_residual')}, iterations {solution['iterations']}")
    if solution.get("approximate"):
        lines.append("  (population objective approximated by Monte Carlo)")
    for m in solution.get("inner_maximizers", []):
        lines.append(f"  maximizer ξ={m['xi']}  f={m['value']}")
    return "\n".join(lines)


def format_certificates(report: dict) -> str:
    rows = [[c["name"], c["passed"], c["witness"]] for c in report["certificates"]]
    table = format_table(["certificate", "passed", "witness"], rows, width=24)
    flags = ", ".join(f"{k}={v}" for k, v in sorted(report.get("flags", {}).items()))
    return f"{table}\nflags: {flags}" if flags else table


def format_value_derivative(fd: dict, formula: dict) -> str:
    """Finite-difference quotients next to the closed-form derivatives."""
    rows = [[row["t"], row["quotient"], row["status"]] for row in fd["table"]]
    lines = [format_table(["t", "quotient", "status"], rows, width=16)]
    lines.append("")
    lines.append(
        format_table(
            ["finite-diff", "minsup", "weighted", "lambda_sup"],
            [[fd["estimate"], formula["minsup"], formula["weighted"], formula["lambda_sup"]]],
            width=16,
        )
    )
    for note in formula.get("notes", []):
        lines.append(f"note: {note}")
    return "\n".join(lines)


def format_comparison(report: dict, title: str = "") -> str:
    rows = [
        [
            e["name"],
            e["ks"],
            e["empirical_mean"],
            e["theoretical_mean"],
            e["empirical_var"],
            e["theoretical_var"],
            e["empirical_zero_mass"],
            e["theoretical_zero_mass"],
            e["passed"],
        ]
        for e in report["entries"]
    ]
    headers = ["coord", "KS", "mean emp", "mean theo", "var emp", "var theo", "zero emp", "zero theo", "pass"]
    table = format_table(headers, rows)
    status = "PASS" if report["passed"] else "FAIL"
    return f"{title} [{status}]\n{table}" if title else f"[{status}]\n{table}"


def format_validation(report: dict) -> str:
    lines = [
        f"Validation of {report['problem_id']}: N={report['N']} R={report['R']} S={report['S']}"
        f" → {'PASS' if report['passed'] else 'FAIL'}",
        f"solution mode {report['solution_mode']}, value mode {report['value_mode']}",
    ]
    if report.get("solution"):
        lines.append(format_comparison(report["solution"], "solution law on 𝓛"))
    lines.append(format_comparison(report["value"], "value law"))
    ortho = report.get("orthogonal_diagnostic") or {}
    if ortho.get("dim"):
        lines.append(f"𝓛⊥ component (diagnostic): dim {ortho['dim']}, rms {ortho['rms']:.6g}, mean {ortho['mean']}")
    reps = report["replications"]
    lines.append(
        f"replications used {reps['used']}/{reps['R']}, failures {reps['failures']}, "
        f"exact recoveries {reps['exact_recovery_count']} ({reps['exact_recovery_rate']:.1%})"
    )
    return "\n".join(lines)


def format_limit_model(model: dict) -> str:
    lines = [f"Solution limit mode: {model['mode']}"]
    if model.get("limit_covariance") is not None:
        lines.append(f"  limit covariance {model['limit_covariance']}")
    lines.append(f"  λ* = {model['lambda_star']}  I₊={model['index_plus']}  I₀={model['index_zero']}")
    return "\n".join(lines)


def render_directory(directory) -> str:
    """Text rendering of every known artifact found in a run directory."""
    directory = Path(directory)
    sections = []
    renderers = [
        ("solution.json", lambda d: "\n\n".join(
            format_solution(d[key], key.capitalize()) for key in ("population", "sample") if d.get(key)
        )),
        ("reduction.json", lambda d: format_certificates(d["certificates"])),
        ("limit.json", lambda d: format_limit_model(d["solution"]) if d.get("solution") else "value limit only"),
        ("value-deriv.json", lambda d: format_value_derivative(d["finite_difference"], d["formula"])),
        ("report.json", format_validation),
    ]
    for name, render in renderers:
        path = directory / name
        if path.exists():
            sections.append(f"== {name} ==\n{render(read_json(path))}")
    return "\n\n".join(sections)
