"""Experiment front end: radius sweeps, forward/inverse runs, self tests.

Every command is a pure function of its configuration (and RNG seed): reruns
produce byte-identical output files.  Exit codes: 0 success, 2 when results
were produced but a certificate or smallness hypothesis is violated, 1 on error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import bounds, forward, inverse
from .greens import WaveMode, assemble
from .grid import build_ball_grid, build_sphere_boundary, data_norm

__all__ = [
    "ExperimentConfig",
    "build_phantom",
    "cmd_radii",
    "cmd_forward",
    "cmd_invert",
    "cmd_selftest",
    "main",
]

DEFAULT_PHANTOM = [{"center": [0.3, 0.0, 0.0], "radius": 0.4, "amplitude": 0.1}]


@dataclass
class ExperimentConfig:
    mode: str = "diffuse"
    k: float = 1.0
    a: float = 1.0
    omega_radius: float = 2.0
    h: float = 1.0 / 6.0
    n_src: int = 48
    n_det: int = 48
    p: float = 2.0
    tau: float | None = 1e-3
    rank: int | None = None
    order: int = 6
    phantom: list = field(default_factory=lambda: [dict(b) for b in DEFAULT_PHANTOM])
    noise: float = 0.0
    seed: int | None = None
    output: str | None = None

    _KEYS = (
        "mode", "k", "a", "omega_radius", "h", "n_src", "n_det", "p",
        "tau", "rank", "order", "phantom", "noise", "seed", "output",
    )

    def validate(self):
        if self.mode not in ("diffuse", "scalar"):
            raise ValueError(f"mode must be diffuse or scalar, got {self.mode!r}")
        if self.k <= 0 or self.a <= 0:
            raise ValueError("k and a must be positive")
        if self.omega_radius <= self.a:
            raise ValueError("omega_radius must exceed a")
        if not 0 < self.h <= 2 * self.a:
            raise ValueError("h must be in (0, 2a]")
        if self.n_src < 1 or self.n_det < 1:
            raise ValueError("n_src and n_det must be >= 1")
        if self.p < 2:
            raise ValueError("p must be in [2, inf]")
        if (self.tau is None) == (self.rank is None):
            raise ValueError("give exactly one of tau or rank")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")
        if self.noise > 0 and self.seed is None:
            raise ValueError("a seed is required when noise > 0")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(cls._KEYS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls()
        if "rank" in data and "tau" not in data:
            cfg.tau = None  # an explicit rank rule replaces the default tau rule
        for key, value in data.items():
            if key == "p" and value == "inf":
                value = math.inf
            setattr(cfg, key, value)
        return cfg

    def to_dict(self) -> dict:
        out = {}
        for key in self._KEYS:
            value = getattr(self, key)
            if key == "p" and math.isinf(value):
                value = "inf"
            out[key] = value
        return out

    @property
    def wave_mode(self) -> WaveMode:
        return WaveMode(self.mode, self.k)


def build_phantom(grid, blobs) -> np.ndarray:
    """Sum of constant-amplitude balls sampled on the grid nodes."""
    eta = np.zeros(grid.n_nodes, dtype=complex)
    for blob in blobs:
        center = np.asarray(blob["center"], dtype=float)
        if center.shape != (3,):
            raise ValueError("blob center must be a 3-vector")
        radius = float(blob["radius"])
        if radius <= 0:
            raise ValueError("blob radius must be positive")
        mask = np.linalg.norm(grid.centers - center[None, :], axis=1) <= radius
        eta[mask] += complex(blob["amplitude"])
    return eta


def validate_absorption(eta: np.ndarray, mode: WaveMode) -> np.ndarray:
    """Physical admissibility: diffuse perturbations are real with values >= -1."""
    eta = np.asarray(eta, dtype=complex)
    if mode.kind == "diffuse":
        if np.any(eta.imag != 0):
            raise ValueError("diffuse absorption perturbation must be real")
        if np.any(eta.real < -1):
            raise ValueError("diffuse absorption perturbation must satisfy eta >= -1")
    return eta


def _setup(config: ExperimentConfig):
    grid = build_ball_grid(config.a, config.h)
    boundary = build_sphere_boundary(config.omega_radius, config.n_src, config.n_det)
    ops = assemble(config.wave_mode, grid, boundary)
    return grid, boundary, ops


def _regularize(ops, config: ExperimentConfig):
    linop = inverse.linearized_operator(ops)
    return inverse.regularize(linop, rank=config.rank, tau=config.tau)


def add_noise(phi: np.ndarray, amplitude: float, seed: int) -> np.ndarray:
    """Entrywise relative perturbation phi * (1 + amplitude * U(-1, 1)), seeded."""
    rng = np.random.default_rng(seed)
    return phi * (1.0 + amplitude * rng.uniform(-1.0, 1.0, size=phi.shape))


RADII_COLUMNS = (
    "ka", "mu_inf", "mu_2", "nu_inf", "nu_2",
    "forward_radius_inf", "forward_radius_2", "R_inf", "R_2", "mode",
)


def cmd_radii(config: ExperimentConfig, ka_values) -> list:
    """Closed-form constants and radii for each ka (at the configured geometry)."""
    rows = []
    for ka in ka_values:
        mode = WaveMode(config.mode, float(ka) / config.a)
        cs = bounds.closed_form_constants(mode, config.a, config.omega_radius)
        fwd_inf, inv_inf = bounds.convergence_radii(cs, bounds.INF)
        fwd_2, inv_2 = bounds.convergence_radii(cs, 2)
        rows.append(
            {
                "ka": float(ka),
                "mu_inf": cs.mu_inf,
                "mu_2": cs.mu_2,
                "nu_inf": cs.nu_inf,
                "nu_2": cs.nu_2,
                "forward_radius_inf": fwd_inf,
                "forward_radius_2": fwd_2,
                "R_inf": inv_inf,
                "R_2": inv_2,
                "mode": config.mode,
            }
        )
    return rows


def radii_csv(rows) -> str:
    lines = [",".join(RADII_COLUMNS)]
    for row in rows:
        cells = []
        for col in RADII_COLUMNS:
            value = row[col]
            cells.append(value if isinstance(value, str) else repr(float(value)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_forward(config: ExperimentConfig) -> tuple[dict, int]:
    """Direct solve, Born summation and the remainder certificate."""
    grid, boundary, ops = _setup(config)
    eta = validate_absorption(build_phantom(grid, config.phantom), config.wave_mode)
    phi = forward.solve_direct(ops, eta)
    certificate = forward.residual_certificate(ops, eta, config.order, phi=phi)
    result = {
        "config": config.to_dict(),
        "grid_nodes": grid.n_nodes,
        "data_norms": {
            "2": data_norm(boundary, phi, 2),
            "inf": data_norm(boundary, phi, bounds.INF),
        },
        "certificate": certificate,
    }
    ok = all(rec["applicable"] for rec in certificate)
    return result, 0 if ok else 2


def cmd_invert(config: ExperimentConfig) -> tuple[dict, int]:
    """Generate data from the phantom by direct solve, invert, and report."""
    grid, boundary, ops = _setup(config)
    eta_true = validate_absorption(build_phantom(grid, config.phantom), config.wave_mode)
    phi = forward.solve_direct(ops, eta_true)
    if config.noise > 0:
        phi = add_noise(phi, config.noise, config.seed)
    kinv = _regularize(ops, config)
    result = inverse.inverse_series(kinv, ops, phi, config.order)
    constants = bounds.closed_form_constants(config.wave_mode, config.a, config.omega_radius)
    diag = inverse.diagnostics(result, kinv, constants, ops, phi, eta_true=eta_true)
    payload = {
        "config": config.to_dict(),
        "grid_nodes": grid.n_nodes,
        "retained_rank": kinv.rank,
        "diagnostics": diag,
    }
    hyp_ok = all(
        rec["hyp_operator_ok"] and rec["hyp_data_ok"] for rec in diag["p"].values()
    )
    return payload, 0 if hyp_ok else 2


def _jsonable(obj):
    if isinstance(obj, dict):
        return {key: _jsonable(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dump_json(payload: dict) -> str:
    return json.dumps(_jsonable(payload), indent=2) + "\n"


# ---------------------------------------------------------------------------
# self test


def _selftest_checks():
    """(name, check) pairs; each check takes a fault flag and returns (ok, detail).

    With fault=True the check perturbs its own reference value, which must
    flip it to FAIL; this guards the harness itself.
    """
    from .greens import greens_kernel, self_cell_integral

    def grid_volume(fault):
        g = build_ball_grid(1.0, 1.0 / 6.0)
        target = 4.0 * math.pi / 3.0 * (2.5 if fault else 1.0)
        rel = abs(g.volume - target) / target
        return rel <= 3.0 * g.spacing / g.radius_a, f"rel dev {rel:.3e}"

    def boundary_weights(fault):
        b = build_sphere_boundary(2.0, 37, 23)
        area = 16.0 * math.pi * (1.001 if fault else 1.0)
        total = b.src_weight * b.n_src
        return abs(total - area) <= 1e-12 * area, f"sum {total:.6f} vs {area:.6f}"

    def kernel_value(fault):
        ref = math.exp(-1.0) / (4.0 * math.pi) * (1.01 if fault else 1.0)
        val = greens_kernel(WaveMode.diffuse(1.0), 1.0)
        return abs(val - ref) <= 1e-15, f"|dev| {abs(val - ref):.3e}"

    def self_cell(fault):
        ref = (1.0 - 2.0 * math.exp(-1.0)) * (1.01 if fault else 1.0)
        val = self_cell_integral(WaveMode.diffuse(1.0), 4.0 * math.pi / 3.0)
        return abs(val - ref) <= 1e-14, f"|dev| {abs(val - ref):.3e}"

    def assembly_symmetry(fault):
        g = build_ball_grid(1.0, 0.35)
        b = build_sphere_boundary(2.0, 6, 6)
        ops = assemble(WaveMode.diffuse(1.0), g, b)
        dev = np.abs(ops.g_vv - ops.g_vv.T).max() + (1e-6 if fault else 0.0)
        return dev == 0.0, f"max asymmetry {dev:.3e}"

    def single_voxel_forward(fault):
        from .grid import Grid

        g = Grid(centers=np.zeros((1, 3)), weights=np.array([0.1]), spacing=0.5, radius_a=0.5)
        b = build_sphere_boundary(2.0, 1, 1)
        mode = WaveMode.diffuse(1.3)
        ops = assemble(mode, g, b)
        eta = np.array([0.7 + 0j])
        phi = forward.solve_direct(ops, eta)[0, 0]
        gs = ops.g_sv[0, 0]
        gd = ops.g_vd[0, 0]
        cself = ops.g_vv[0, 0]
        ref = mode.k**2 * gs * 0.7 * 0.1 * gd / (1.0 + mode.k**2 * 0.7 * cself)
        ref *= 1.01 if fault else 1.0
        return abs(phi - ref) <= 1e-14 * abs(ref), f"|dev| {abs(phi - ref):.3e}"

    def multilinearity(fault):
        g = build_ball_grid(1.0, 0.45)
        b = build_sphere_boundary(2.0, 4, 4)
        ops = assemble(WaveMode.diffuse(1.0), g, b)
        rng = np.random.default_rng(11)
        f1 = rng.normal(size=g.n_nodes) + 1j * rng.normal(size=g.n_nodes)
        f2 = rng.normal(size=g.n_nodes)
        lhs = forward.born_term(ops, [2.5 * f1, f2])
        rhs = 2.5 * forward.born_term(ops, [f1, f2]) * (1.001 if fault else 1.0)
        dev = np.abs(lhs - rhs).max() / np.abs(rhs).max()
        return dev <= 1e-12, f"rel dev {dev:.3e}"

    def born_vs_direct(fault):
        g = build_ball_grid(1.0, 0.3)
        b = build_sphere_boundary(2.0, 8, 8)
        ops = assemble(WaveMode.diffuse(1.0), g, b)
        amp = 0.3 / bounds.mu_closed_form(WaveMode.diffuse(1.0), 1.0, bounds.INF)
        eta = np.full(g.n_nodes, amp, dtype=complex) * (1.2 if fault else 1.0)
        phi = forward.solve_direct(ops, eta)
        series = forward.born_series(ops, eta if not fault else eta / 1.2, 25)
        dev = np.abs(phi - series.partial_sums[-1]).max() / np.abs(phi).max()
        return dev <= 1e-8, f"rel dev {dev:.3e}"

    def certificate_dominates(fault):
        g = build_ball_grid(1.0, 0.3)
        b = build_sphere_boundary(2.0, 8, 8)
        ops = assemble(WaveMode.diffuse(1.0), g, b)
        amp = 0.4 / bounds.mu_closed_form(WaveMode.diffuse(1.0), 1.0, bounds.INF)
        eta = np.full(g.n_nodes, amp, dtype=complex)
        records = forward.residual_certificate(ops, eta, 5)
        scale = 1e-4 if fault else 1.0
        ok = all(
            rec["applicable"]
            and all(e <= bd * scale for e, bd in zip(rec["empirical"], rec["bound"]))
            for rec in records
        )
        return ok, "empirical <= bound for all orders and p"

    def linearized_two_path(fault):
        g = build_ball_grid(1.0, 0.35)
        b = build_sphere_boundary(2.0, 5, 7)
        ops = assemble(WaveMode.scalar(1.0), g, b)
        linop = inverse.linearized_operator(ops)
        rng = np.random.default_rng(3)
        eta = rng.normal(size=g.n_nodes) + 1j * rng.normal(size=g.n_nodes)
        via_matrix = (linop.matrix @ eta).reshape(b.n_src, b.n_det)
        via_chain = forward.born_term(ops, [eta]) * (1.0001 if fault else 1.0)
        dev = np.abs(via_matrix - via_chain).max() / np.abs(via_chain).max()
        return dev <= 1e-12, f"rel dev {dev:.3e}"

    def projector_idempotent(fault):
        g = build_ball_grid(1.0, 0.35)
        b = build_sphere_boundary(2.0, 8, 8)
        ops = assemble(WaveMode.diffuse(1.0), g, b)
        kinv = inverse.regularize(inverse.linearized_operator(ops), tau=1e-2)
        proj = kinv.projector_matrix()
        dev = np.abs(proj @ proj - proj).max() + (1e-6 if fault else 0.0)
        return dev <= 1e-10, f"max |P^2 - P| {dev:.3e}"

    def recursion_composition(fault):
        g = build_ball_grid(1.0, 0.45)
        b = build_sphere_boundary(2.0, 6, 6)
        ops = assemble(WaveMode.diffuse(1.0), g, b)
        kinv = inverse.regularize(inverse.linearized_operator(ops), tau=1e-3)
        eta = 0.02 * build_phantom(g, DEFAULT_PHANTOM) / DEFAULT_PHANTOM[0]["amplitude"]
        phi = forward.solve_direct(ops, eta)
        res = inverse.inverse_series(kinv, ops, phi, 3)
        eta1 = res.terms[0]
        t_c = kinv.apply(forward.born_term(ops, [eta1, eta1, eta1]))
        u = forward.born_term(ops, [eta1])
        v = forward.born_term(ops, [eta1, eta1])
        t_a = -kinv.apply(forward.born_term(ops, [kinv.apply(u), kinv.apply(v)]))
        t_b = -kinv.apply(forward.born_term(ops, [kinv.apply(v), kinv.apply(u)]))
        explicit = -(t_a + t_b + t_c) * (1.0001 if fault else 1.0)
        dev = np.abs(res.terms[2] - explicit).max() / max(np.abs(explicit).max(), 1e-300)
        return dev <= 1e-12, f"rel dev {dev:.3e}"

    def partition_identity(fault):
        j = 7
        total = sum(bounds.partition_count(j, m) for m in range(1, j))
        ref = bounds.diagram_count(j) + (1 if fault else 0)
        return total == ref and bounds.partition_count(4, 2) == 3, f"sum over m = {total}"

    def interpolation_endpoints(fault):
        mu2, mu_inf = 0.35, 0.6
        got2 = bounds.interpolate_constants(mu2, mu_inf, 1.0, 1.0, 2)[0]
        gotinf = bounds.interpolate_constants(mu2, mu_inf, 1.0, 1.0, bounds.INF)[0]
        ref2 = mu2 * (1.01 if fault else 1.0)
        return abs(got2 - ref2) <= 1e-15 and abs(gotinf - mu_inf) <= 1e-15, "endpoints exact"

    def radii_monotone(fault):
        mode = WaveMode.diffuse(1.0)
        cs1 = bounds.closed_form_constants(mode, 1.0, 2.0)
        cs2 = bounds.closed_form_constants(WaveMode.diffuse(1.3), 1.0, 2.0)
        r1 = bounds.convergence_radii(cs1, 2)[1]
        r2 = bounds.convergence_radii(cs2, 2)[1] * (3.0 if fault else 1.0)
        return r2 < r1, f"R2(k=1.3)={r2:.4f} < R2(k=1)={r1:.4f}"

    def term_bound_sample(fault):
        g = build_ball_grid(1.0, 0.4)
        b = build_sphere_boundary(2.0, 6, 6)
        mode = WaveMode.diffuse(1.0)
        ops = assemble(mode, g, b)
        cs = bounds.closed_form_constants(mode, 1.0, 2.0)
        from .grid import field_norm as fn

        rng = np.random.default_rng(5)
        ok = True
        worst = 0.0
        for _ in range(20):
            fs = [rng.uniform(-1, 1, g.n_nodes) for _ in range(3)]
            fs = [f / fn(g, f, bounds.INF) for f in fs]
            out = data_norm(b, forward.born_term(ops, fs), bounds.INF)
            lim = cs.nu_inf * cs.mu_inf**2 * (1e-5 if fault else 1.0)
            worst = max(worst, out / lim)
            ok = ok and out <= lim
        return ok, f"worst ratio {worst:.3e}"

    return [
        ("grid-volume", grid_volume),
        ("boundary-weights", boundary_weights),
        ("kernel-value", kernel_value),
        ("self-cell-integral", self_cell),
        ("assembly-symmetry", assembly_symmetry),
        ("single-voxel-forward", single_voxel_forward),
        ("multilinearity", multilinearity),
        ("born-vs-direct", born_vs_direct),
        ("certificate-dominates", certificate_dominates),
        ("linearized-two-path", linearized_two_path),
        ("projector-idempotent", projector_idempotent),
        ("recursion-composition", recursion_composition),
        ("partition-identity", partition_identity),
        ("interpolation-endpoints", interpolation_endpoints),
        ("radii-monotone", radii_monotone),
        ("term-bound-sample", term_bound_sample),
    ]


def cmd_selftest(inject_fault: str | None = None, out=sys.stdout) -> int:
    checks = _selftest_checks()
    names = [name for name, _ in checks]
    if inject_fault is not None and inject_fault not in names:
        print(f"unknown check name {inject_fault!r}; known: {', '.join(names)}", file=out)
        return 1
    failures = 0
    for name, check in checks:
        try:
            ok, detail = check(name == inject_fault)
        except Exception as exc:  # a crashed check is a failure, not an abort
            ok, detail = False, f"exception: {exc}"
        status = "PASS" if ok else "FAIL"
        if not ok:
            failures += 1
        print(f"{status}  {name} ({detail})", file=out)
    print(f"{len(checks) - failures}/{len(checks)} checks passed", file=out)
    return 0 if failures == 0 else 1


# ---------------------------------------------------------------------------
# argument parsing


def _add_config_flags(parser):
    parser.add_argument("--config", help="JSON file with ExperimentConfig keys")
    parser.add_argument("--mode", choices=["diffuse", "scalar"])
    parser.add_argument("--k", type=float)
    parser.add_argument("--a", type=float)
    parser.add_argument("--omega-radius", dest="omega_radius", type=float)
    parser.add_argument("--h", type=float)
    parser.add_argument("--n-src", dest="n_src", type=int)
    parser.add_argument("--n-det", dest="n_det", type=int)
    parser.add_argument("--p", type=lambda s: math.inf if s == "inf" else float(s))
    parser.add_argument("--tau", type=float)
    parser.add_argument("--rank", type=int)
    parser.add_argument("--order", type=int)
    parser.add_argument("--phantom", help="JSON list of {center, radius, amplitude} blobs")
    parser.add_argument("--noise", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--output", help="output file path")


def _resolve_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data.update(json.load(fh))
    cfg = ExperimentConfig.from_dict(data)
    for key in ExperimentConfig._KEYS:
        value = getattr(args, key, None)
        if value is not None:
            if key == "phantom":
                value = json.loads(value)
            setattr(cfg, key, value)
    if args.__dict__.get("rank") is not None and "tau" not in data and args.tau is None:
        cfg.tau = None  # an explicit rank flag replaces the default tau rule
    return cfg.validate()


def _write_output(text: str, path: str | None, default_name: str) -> str:
    path = path or default_name
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="invborn",
        description="Born and inverse Born series experiments with convergence certificates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_radii = sub.add_parser("radii", help="closed-form constants and radii over a ka sweep")
    _add_config_flags(p_radii)
    p_radii.add_argument("--ka", help="comma-separated ka values")
    p_radii.add_argument("--ka-min", type=float, default=0.1)
    p_radii.add_argument("--ka-max", type=float, default=100.0)
    p_radii.add_argument("--ka-points", type=int, default=60)

    p_fwd = sub.add_parser("forward", help="direct solve, Born sum and remainder certificate")
    _add_config_flags(p_fwd)

    p_inv = sub.add_parser("invert", help="inverse series reconstruction and diagnostics")
    _add_config_flags(p_inv)

    p_self = sub.add_parser("selftest", help="run the invariant checks")
    p_self.add_argument("--inject-fault", help="perturb the named check (must then fail)")

    args = parser.parse_args(argv)
    try:
        if args.command == "selftest":
            return cmd_selftest(args.inject_fault)
        config = _resolve_config(args)
        if args.command == "radii":
            if args.ka:
                kas = [float(s) for s in args.ka.split(",")]
            else:
                kas = list(
                    np.geomspace(args.ka_min, args.ka_max, args.ka_points)
                )
            rows = cmd_radii(config, kas)
            path = _write_output(radii_csv(rows), config.output, "radii.csv")
            print(f"wrote {len(rows)} rows to {path}")
            return 0
        if args.command == "forward":
            payload, code = cmd_forward(config)
            path = _write_output(dump_json(payload), config.output, "forward.json")
            print(f"wrote forward result to {path} (exit {code})")
            return code
        payload, code = cmd_invert(config)
        path = _write_output(dump_json(payload), config.output, "invert.json")
        print(f"wrote inversion result to {path} (exit {code})")
        return code
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
