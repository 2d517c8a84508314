from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import structlog

from .cocycle import (
    MatrixCocycle,
    fiber_bunching_margin,
    one_sided_reduction,
    require_fiber_bunched,
    stable_holonomy,
    unstable_holonomy,
)
from .config import (
    AppConfig,
    RunConfig,
    configure_logging,
    ensure_output_dirs,
    load_app_config,
    parse_config,
)
from .errors import CocycleError, SpectralGapError
from .fixtures import FIXTURES, create_sample_config
from .gibbs import (
    check_gibbs_bounds,
    check_invariance,
    equilibrium_gap,
    gibbs_measure,
    kappa_delta_bounds,
    psi_mixing_report,
    quasi_bernoulli_constant,
)
from .lyapunov import ld_diagnostic, lyapunov_spectrum_mc, pressure_derivative_check, top_lyapunov_mc
from .pressure import potential_pressure, pressure_curve, pressure_derivative
from .symbolic import SequencePoint
from .tables import finish_manifest, new_manifest, save_manifest, write_table
from .transfer import (
    GFunction,
    build_grid,
    concentration_diagnostic,
    TMaxScan,
    h_bounds_check,
    operator_geometry,
    ruelle_g,
    scan_t_max,
    spectral_triple,
)
from .typicality import is_one_typical, is_typical

log = structlog.get_logger(__name__)

COMMANDS = ("pressure", "spectrum", "gibbs", "mixing", "lyapunov", "typicality", "holonomy", "ld")
USAGE = (
    "사용법: python -m Cocycle_Thermo.main "
    "[pressure|spectrum|gibbs|mixing|lyapunov|typicality|holonomy|ld|validate] <config.json> [--out DIR]\n"
    "       python -m Cocycle_Thermo.main sample-config [fix_sc|fix_dg|fix_ty] [--out FILE]"
)


class RunContext:
    """명령 실행에 필요한 설정과 출력 위치"""

    def __init__(self, cfg: RunConfig, app: AppConfig, output_dir: Path, manifest: Dict[str, Any]) -> None:
        self.cfg = cfg
        self.app = app
        self.output_dir = output_dir
        self.manifest = manifest
        self._forward: Optional[MatrixCocycle] = None
        self._g: Optional[GFunction] = None

    @property
    def forward(self) -> MatrixCocycle:
        """lag-0 cocycle conjugate to the configured one."""
        if self._forward is None:
            c = self.cfg.cocycle
            self._forward = one_sided_reduction(c).cocycle if c.lag else c
        return self._forward

    @property
    def g(self) -> GFunction:
        if self._g is None:
            self._g = ruelle_g(self.cfg.shift, self.cfg.psi, max_iter=self.app.numerics.max_iter)
        return self._g

    def grid(self):
        return build_grid(self.cfg.cocycle.dimension, self.cfg.grid.n_proj, self.cfg.grid.m_grid)

    def meta(self, **extra: Any) -> Dict[str, Any]:
        return {"config": self.cfg.name, **extra}

    def table(self, name: str, rows: List[Dict[str, Any]], **meta: Any) -> Path:
        path = write_table(rows, self.output_dir / "tables" / f"{name}.csv", self.meta(**meta))
        self.manifest["outputs"].append(str(path))
        return path

    def triples(self, ts: List[float]):
        grid = self.grid()
        geometry = operator_geometry(self.forward, self.g, grid)
        num = self.app.numerics
        for t in ts:
            yield t, spectral_triple(self.forward, self.g, t, grid, num.power_tol, num.max_iter, num.gap_floor,
                                     geometry)

    def scan(self, ts: List[float]) -> TMaxScan:
        """경험적 t_max: 0 에서 바깥으로 훑어 처음 실패하기 전까지의 최대 |t|"""
        num = self.app.numerics
        return scan_t_max(self.forward, self.g, self.grid(), sorted(set(ts)), num.gap_floor, num.power_tol,
                          num.max_iter)

    def measures(self, depth: int):
        for t, triple in self.triples(self.cfg.t_values):
            yield t, triple, gibbs_measure(triple, self.forward, self.g, depth)


# --- commands ---------------------------------------------------------------------------------

def run_pressure(ctx: RunContext) -> Dict[str, Any]:
    cfg = ctx.cfg
    curve = pressure_curve(cfg.cocycle, cfg.t_values, cfg.n, cfg.psi, workers=ctx.app.threads)
    rows = [row for est in curve for row in est.rows()]
    ctx.table("pressure_by_n", rows)
    derivative = dict(pressure_derivative(curve)) if len(curve) >= 2 else {}
    summary = [
        {
            "t": est.t,
            "estimate": est.estimate,
            "lower": est.bracket[0] if est.bracket else None,
            "upper": est.bracket[1] if est.bracket else None,
            "converged": est.converged,
            "derivative": derivative.get(est.t),
        }
        for est in curve
    ]
    ctx.table("pressure", summary, n=cfg.n, tol=ctx.app.numerics.pressure_tol)
    for row in summary:
        print(f"  t={row['t']:+.3f}  P={row['estimate']:.10f}  [{row['lower']}, {row['upper']}]")
    return {"points": len(summary)}


def run_spectrum(ctx: RunContext) -> Dict[str, Any]:
    cfg = ctx.cfg
    p_psi = potential_pressure(cfg.psi)
    t_max = ctx.scan(cfg.t_values).t_max

    def outside(t: float) -> bool:
        if abs(t) > t_max:
            log.warning("t_outside_t_max", t=t, t_max=t_max)
            return True
        return False

    rows: List[Dict[str, Any]] = []
    try:
        for t, triple in ctx.triples(cfg.t_values):
            h_bounds_check(triple)
            conc = concentration_diagnostic(triple, ctx.forward, g=ctx.g)
            rows.append({
                **triple.row(),
                "t_max_scan": t_max,
                "outside_t_max": outside(t),
                "pressure": triple.log_rho + p_psi,
                "concentration": conc.fraction,
                "concentration_reliable": conc.reliable,
            })
            print(f"  t={t:+.3f}  rho={triple.rho:.12f}  gap={triple.spectral_gap:.4f}")
    except SpectralGapError as e:
        if e.partial is not None:
            rows.append({**e.partial.row(), "t_max_scan": t_max, "outside_t_max": outside(e.partial.t),
                         "pressure": e.partial.log_rho + p_psi, "failed": True})
        raise
    finally:
        if rows:
            ctx.table("spectrum", rows, n_proj=cfg.grid.n_proj, m_grid=cfg.grid.m_grid,
                      tol=ctx.app.numerics.power_tol)
    return {"points": len(rows), "t_max": t_max}


def run_gibbs(ctx: RunContext) -> Dict[str, Any]:
    cfg = ctx.cfg
    weights, summary = [], []
    for t, triple, mu in ctx.measures(cfg.depth):
        report = check_gibbs_bounds(mu, ctx.forward, ctx.g, triple)
        eq = equilibrium_gap(mu, ctx.forward, t, cfg.psi, cfg.depth, triple.log_rho + potential_pressure(cfg.psi))
        weights.extend({"t": t, **row} for row in mu.rows(cfg.depth))
        summary.append({
            "t": t,
            "C1": report.C1,
            "C2": report.C2,
            "ratio_drift": report.ratio_drift,
            "invariance_defect": check_invariance(mu) if mu.depth >= 2 else None,
            "equilibrium_gap": eq.gap,
            "entropy": eq.entropy,
            "lyapunov": eq.lyapunov,
            "worst_level_defect": max(mu.defects.values()) if mu.defects else 0.0,
        })
        print(f"  t={t:+.3f}  C1={report.C1:.6g}  C2={report.C2:.6g}  eq_gap={eq.gap:.3g}")
    meta = dict(depth=cfg.depth, n_proj=cfg.grid.n_proj)
    ctx.table("gibbs_weights", weights, **meta)
    ctx.table("gibbs", summary, **meta)
    return {"points": len(summary)}


def run_mixing(ctx: RunContext) -> Dict[str, Any]:
    cfg = ctx.cfg
    L, n_gap = cfg.mixing.L, cfg.mixing.n_gap
    k = cfg.shift.mixing_time or 1
    depth = max(cfg.depth, 2 * L + max(n_gap, k))
    rows, summary = [], []
    for t, _, mu in ctx.measures(depth):
        report = psi_mixing_report(mu, L, n_gap)
        rows.extend({"t": t, "gap": gap, "deviation": dev} for gap, dev in report.rows)
        kappa, delta = kappa_delta_bounds(mu, k, L)
        summary.append({
            "t": t,
            "nonincreasing": report.nonincreasing,
            "quasi_bernoulli": quasi_bernoulli_constant(mu, L),
            "k": k,
            "kappa": kappa,
            "delta": delta,
        })
        print(f"  t={t:+.3f}  final deviation={report.rows[-1][1]:.3g}")
    ctx.table("mixing", rows, L=L, depth=depth)
    ctx.table("mixing_summary", summary, L=L, depth=depth)
    return {"points": len(summary)}


def run_lyapunov(ctx: RunContext) -> Dict[str, Any]:
    cfg, ly = ctx.cfg, ctx.cfg.lyapunov
    rows, checks = [], []
    grid = ctx.grid()
    stencil = [s for t in cfg.t_values for s in (t - ly.h_step, t, t + ly.h_step)]
    t_max = ctx.scan(stencil).t_max
    for t, triple, mu in ctx.measures(cfg.depth):
        top = top_lyapunov_mc(ctx.forward, mu, ly.n, ly.trials, cfg.seed, ctx.app.threads)
        rows.append({"t": t, "index": 1, **top.row()})
        for i, est in enumerate(lyapunov_spectrum_mc(ctx.forward, mu, ly.n, ly.trials, cfg.seed, ctx.app.threads), 1):
            rows.append({"t": t, "index": i, **est.row()})
        check = pressure_derivative_check(ctx.forward, cfg.psi, t, ly.h_step, grid, mu=mu, g=ctx.g,
                                          n_cylinder=cfg.n, n_orbit=ly.n, trials=ly.trials, seed=cfg.seed,
                                          t_max=t_max)
        checks.append({
            "t": t,
            "spectral": check.spectral,
            "cylinder": check.cylinder,
            "monte_carlo": check.lyapunov.value,
            "std_error": check.lyapunov.std_error,
            "discrepancy": check.discrepancy,
            "t_max_scan": t_max,
            "outside_t_max": check.outside_t_max,
        })
        print(f"  t={t:+.3f}  lambda1={top.value:.6f} ± {top.std_error:.2g}  P'={check.spectral:.6f}")
    meta = dict(n=ly.n, trials=ly.trials, seed=cfg.seed, depth=cfg.depth)
    ctx.table("lyapunov", rows, **meta)
    ctx.table("pressure_derivative", checks, h_step=ly.h_step, **meta)
    return {"points": len(checks)}


def run_ld(ctx: RunContext) -> Dict[str, Any]:
    cfg, ly = ctx.cfg, ctx.cfg.lyapunov
    rows, summary = [], []
    for t, _, mu in ctx.measures(cfg.depth):
        report = ld_diagnostic(ctx.forward, mu, ly.eps, ly.n_list, ly.trials, cfg.seed, workers=ctx.app.threads)
        rows.extend({"t": t, "n": n, "exceedance": f} for n, f in report.rows)
        summary.append({"t": t, "rate": report.rate, "r_squared": report.r_squared, "reference": report.reference})
        print(f"  t={t:+.3f}  rate={report.rate:.4g}  r2={report.r_squared:.3f}")
    meta = dict(eps=ly.eps, trials=ly.trials, seed=cfg.seed)
    ctx.table("ld", rows, **meta)
    ctx.table("ld_summary", summary, **meta)
    return {"points": len(summary)}


def run_typicality(ctx: RunContext) -> Dict[str, Any]:
    cfg = ctx.cfg
    caps = (cfg.typicality.period_cap, cfg.typicality.insert_cap, ctx.app.numerics.independence_tol)
    one = is_one_typical(cfg.cocycle, *caps)
    full = is_typical(cfg.cocycle, *caps) if cfg.cocycle.dimension > 2 else one
    report = {"one_typical": one.to_dict(), "typical": full.to_dict()}
    path = ctx.output_dir / "tables" / "typicality.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, ensure_ascii=False, default=str)
    ctx.manifest["outputs"].append(str(path))
    ctx.table("typicality_search", one.search_log, period_cap=caps[0], insert_cap=caps[1], tol=caps[2])
    print(f"  1-typical: {one.typical}  typical: {full.typical}")
    return {"one_typical": one.typical, "typical": full.typical}


def run_holonomy(ctx: RunContext) -> Dict[str, Any]:
    cfg = ctx.cfg
    bunching = require_fiber_bunched(cfg.cocycle) if cfg.require_fiber_bunching else fiber_bunching_margin(cfg.cocycle)
    ctx.table("fiber_bunching", bunching.rows, holder_exponent=cfg.cocycle.holder_exponent)
    if cfg.holonomy is None:
        return {"fiber_bunched": bunching.bunched}
    x = SequencePoint.from_text(cfg.shift, cfg.holonomy.x, cfg.holonomy.x_past)
    y = SequencePoint.from_text(cfg.shift, cfg.holonomy.y, cfg.holonomy.y_past)
    rows = []
    for kind, fn in (("stable", stable_holonomy), ("unstable", unstable_holonomy)):
        try:
            res = fn(cfg.cocycle, x, y)
        except CocycleError as e:
            rows.append({"kind": kind, "error": e.message})
            continue
        rows.append({
            "kind": kind,
            "iterations": res.iterations,
            "cauchy_residual": res.cauchy_residual,
            "holder_ratio": res.holder_ratio,
            "matrix": json.dumps(np.asarray(res.matrix).tolist()),
        })
    ctx.table("holonomy", rows, x=cfg.holonomy.x, y=cfg.holonomy.y)
    return {"fiber_bunched": bunching.bunched, "holonomies": len(rows)}


RUNNERS: Dict[str, Callable[[RunContext], Dict[str, Any]]] = {
    "pressure": run_pressure,
    "spectrum": run_spectrum,
    "gibbs": run_gibbs,
    "mixing": run_mixing,
    "lyapunov": run_lyapunov,
    "typicality": run_typicality,
    "holonomy": run_holonomy,
    "ld": run_ld,
}


# --- orchestration ----------------------------------------------------------------------------

async def run_command(command: str, cfg: RunConfig, app: AppConfig, out: Optional[Path] = None) -> int:
    """
    명령 실행 후 종료 코드 반환

    Returns:
        0 성공, 그 외 예외의 exit_code
    """
    output_dir = out or cfg.output_dir or app.output_dir
    ensure_output_dirs(output_dir)
    manifest = new_manifest(command, cfg.source)
    manifest["seed"] = cfg.seed
    ctx = RunContext(cfg, app, output_dir, manifest)
    code = 0
    try:
        print(f"=== {command} ({cfg.name}) ===")
        if cfg.require_fiber_bunching and command != "holonomy":
            require_fiber_bunched(cfg.cocycle)
        manifest["result"] = await asyncio.to_thread(RUNNERS[command], ctx)
        finish_manifest(manifest, "completed")
    except CocycleError as e:
        manifest["errors"].append(e.to_dict())
        finish_manifest(manifest, "failed")
        code = e.exit_code
        log.error("command_failed", command=command, error=e.message, exit_code=code)
        print(f"오류 ({type(e).__name__}): {e.message}")
    path = save_manifest(manifest, output_dir)
    print(f"매니페스트 저장: {path}")
    print(f"=== 완료: {manifest['status']} (wall {manifest['wall_time_s']:.2f}s) ===")
    return code


def _option(args: List[str], name: str) -> Optional[str]:
    if name in args:
        i = args.index(name)
        if i + 1 < len(args):
            return args[i + 1]
    return None


def _positional(args: List[str]) -> List[str]:
    out, skip = [], False
    for a in args:
        if skip:
            skip = False
        elif a == "--out":
            skip = True
        else:
            out.append(a)
    return out


def sample_config(args: List[str]) -> int:
    pos = _positional(args)
    name = pos[0] if pos else "fix_ty"
    if name not in FIXTURES:
        print(f"알 수 없는 fixture: {name}")
        return 2
    text = json.dumps(create_sample_config(name), indent=2)
    target = _option(args, "--out")
    if target:
        Path(target).write_text(text + "\n", encoding="utf-8")
        print(f"샘플 설정 저장: {target}")
    else:
        print(text)
    return 0


async def main(argv: Optional[List[str]] = None) -> int:
    """메인 함수"""
    args = list(sys.argv[1:] if argv is None else argv)
    app = load_app_config()
    configure_logging(app.logging.level, app.logging.json)

    if not args:
        print(USAGE)
        return 2
    command, rest = args[0].lower(), args[1:]
    if command == "sample-config":
        return sample_config(rest)
    if command not in COMMANDS and command != "validate":
        print(f"알 수 없는 명령: {command}")
        print(USAGE)
        return 2
    pos = _positional(rest)
    if not pos:
        print(USAGE)
        return 2

    try:
        cfg = parse_config(pos[0])
    except CocycleError as e:
        print(f"설정 오류 ({type(e).__name__}): {e.message}")
        for err in getattr(e, "errors", []):
            print(f"  - {err}")
        return e.exit_code

    if command == "validate":
        print(f"설정 확인: {cfg.name} (k={cfg.shift.k}, d={cfg.cocycle.dimension}, depth={cfg.cocycle.depth}, "
              f"lag={cfg.cocycle.lag}, t={len(cfg.t_values)}개)")
        return 0

    out = _option(rest, "--out")
    return await run_command(command, cfg, app, Path(out) if out else None)


if __name__ == "__main__":
    sys.exit(asyncio.run(main()))
