"""Command-line pipeline: simulate, preprocess, noise, enkf, regularize, sacom, report.

Every stage reads its inputs from and writes its outputs to one run
directory and records what it did in ``manifest.json`` there.

Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 I/O error.
"""
import argparse
import json
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import formats
from .config import beam_config, dump_config, load_config
from .enkf import EnkfConfig, run_smoother
from .errors import ConfigError, FormatError, NumericalError, VibDamageError, IdentificationError
from .fem import assemble_system, element_containing
from .modal import forward_map
from .modal_id import identify
from .noise import estimate_noise
from .regularize import MapProblem, reconstruction_statistics, solve_map
from .sacom import (
    DataDensity, beam_forward, event_probability, marginal_density, marginal_mode,
    push_forward, run_sacom, tessellate_data_space, uniform_samples,
)
from .simulate import SimulationSpec, generate_measurement_set

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
_NAME = re.compile(r"case(\d+)_set(\d+)")


class Run:
    """Run directory with its manifest."""

    def __init__(self, out, cfg, seed):
        self.out = Path(out)
        self.cfg = cfg
        self.seed = seed
        self.path = self.out / "manifest.json"
        if self.path.exists():
            self.manifest = json.loads(self.path.read_text())
        else:
            self.manifest = {"stages": {}}

    def record(self, stage, started, inputs, outputs, **extra):
        self.manifest.update(
            tool_version=__version__,
            config_hash=formats.config_hash(self.cfg),
        )
        self.manifest.setdefault("seeds", {})[stage] = self.seed
        self.manifest["stages"][stage] = {
            "inputs": sorted(str(p) for p in inputs),
            "outputs": sorted(str(p) for p in outputs),
            "seconds": round(time.perf_counter() - started, 3),
            **extra,
        }
        self.out.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.manifest, indent=1, sort_keys=True) + "\n")


def _say(msg):
    print(msg, file=sys.stderr)


def _case_set(path):
    m = _NAME.search(Path(path).name)
    if not m:
        raise FormatError(f"{path}: file name does not follow caseC_setK")
    return int(m.group(1)), int(m.group(2))


def _inputs(directory, pattern, what):
    files = sorted(Path(directory).glob(pattern))
    if not files:
        raise FileNotFoundError(f"no {what} found in {directory}")
    return files


def _map_threads(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _set_seed(seed, case, k):
    return int(np.random.SeedSequence([seed, case, k]).generate_state(1, np.uint64)[0] >> 1)


# stages -------------------------------------------------------------------

def cmd_simulate(args, cfg):
    started = time.perf_counter()
    run = Run(args.out, cfg, args.seed)
    sim = cfg["simulation"]
    base = beam_config(cfg)
    target = sim["damaged_element"] - 1
    if not 0 <= target < base.elements:
        raise ConfigError(f"damaged_element {sim['damaged_element']} outside 1..{base.elements}")
    outputs = []
    for case, level in enumerate(sim["damage_levels"]):
        d = np.zeros(base.elements)
        d[target] = level
        for k in range(sim["sets_per_case"]):
            spec = SimulationSpec(
                base_config=base, duration=sim["duration"], sample_rate=sim["sample_rate"],
                damage=d, tip_displacement=tuple(sim["tip_displacement"]),
                tip_torque=tuple(sim["tip_torque"]), temperature=tuple(sim["temperature"]),
                noise_fraction=sim["noise_fraction"], thermal_expansion=sim["thermal_expansion"],
                substeps=sim["substeps"], seed=_set_seed(args.seed, case, k),
                label=f"case{case}_set{k + 1}",
            )
            mset = generate_measurement_set(spec)
            mset.metadata.update(case=case, set=k + 1, config_hash=formats.config_hash(cfg))
            path = run.out / "measurements" / f"case{case}_set{k + 1}.csv"
            outputs.append(formats.write_measurement_set(path, mset))
    (run.out / "config.yaml").write_text(dump_config(cfg))
    run.record("simulate", started, [args.config or "<defaults>"], outputs)
    _say(f"simulate: wrote {len(outputs)} measurement sets")
    return outputs


def cmd_preprocess(args, cfg):
    started = time.perf_counter()
    run = Run(args.out, cfg, args.seed)
    files = _inputs(args.input or run.out / "measurements", "case*_set*.csv", "measurement sets")
    n = cfg["preprocess"]["modes"]
    p = beam_config(cfg).sensor_count

    def one(path):
        mset = formats.read_measurement_set(path, sensors=p)
        try:
            obs, _, diag = identify(mset, n, guard=cfg["preprocess"]["guard"])
        except IdentificationError as exc:
            return path, None, exc
        return path, obs, diag

    outputs, rows, failed = [], [], []
    for path, obs, diag in _map_threads(one, files, args.threads):
        case, k = _case_set(path)
        if obs is None:
            failed.append(path.name)
            _say(f"preprocess: {path.name}: {diag}")
            continue
        out = run.out / "modal" / path.name
        outputs.append(formats.write_modal_observation(
            out, obs, n, p, {"case": case, "set": k, "source": path.name}))
        rows.append([case, k, diag.residual, diag.iterations]
                    + [e for pair in diag.band_edges for e in pair])
    if not outputs:
        raise NumericalError("modal identification failed for every measurement set")
    cols = ["case", "set", "residual", "iterations"]
    cols += [f"band{m + 1}_{side}" for m in range(n) for side in ("lo", "hi")]
    diag_path = formats.write_table(run.out / "modal" / "diagnostics.csv", "diagnostics",
                                    cols, rows, {"failed": failed})
    run.record("preprocess", started, files, outputs + [diag_path])
    _say(f"preprocess: {len(outputs)} modal observations, {len(failed)} failures")
    return outputs


def _load_modal(directory, n, p):
    groups = {}
    for path in _inputs(directory, "case*_set*.csv", "modal observations"):
        obs, meta = formats.read_modal_observation(path, n, p)
        groups.setdefault(int(meta["case"]), []).append((int(meta["set"]), obs, path))
    return {c: sorted(v, key=lambda t: t[0]) for c, v in sorted(groups.items())}


def cmd_noise(args, cfg):
    started = time.perf_counter()
    run = Run(args.out, cfg, args.seed)
    n = cfg["preprocess"]["modes"]
    p = beam_config(cfg).sensor_count
    groups = _load_modal(args.input or run.out / "modal", n, p)
    ref = cfg["noise"]["undamaged_group"]
    if ref not in groups:
        raise FormatError(f"no observations for the undamaged case {ref}")
    cases = list(groups)
    grouped = [np.array([g[1] for g in groups[c]]) for c in cases]
    system = assemble_system(beam_config(cfg, "regularize"))
    model = estimate_noise(grouped, forward_map(system, np.zeros(system.n_elements), n),
                           undamaged_group=cases.index(ref), jitter=cfg["noise"]["jitter"])
    out = formats.write_noise_model(run.out / "noise.csv", model, n, p,
                                    {"groups": cases, "elements": system.n_elements})
    run.record("noise", started, [g[2] for c in cases for g in groups[c]], [out])
    _say(f"noise: {len(cases)} groups of {[len(groups[c]) for c in cases]}")
    return out


def _selected(groups, cases):
    return {c: v for c, v in groups.items() if cases is None or c in cases}


def cmd_regularize(args, cfg):
    started = time.perf_counter()
    run = Run(args.out, cfg, args.seed)
    n = cfg["preprocess"]["modes"]
    p = beam_config(cfg).sensor_count
    system = assemble_system(beam_config(cfg, "regularize"))
    noise, meta = formats.read_noise_model(args.noise or run.out / "noise.csv", n, p)
    if meta.get("elements") not in (None, system.n_elements):
        raise FormatError(f"noise model built for {meta['elements']} elements, "
                          f"regularization mesh has {system.n_elements}")
    groups = _selected(_load_modal(args.input or run.out / "modal", n, p), args.cases)
    lam = args.lam if args.lam is not None else cfg["regularize"]["lambda"]
    items = [(c, k, obs, path) for c, v in groups.items() for k, obs, path in v]

    def one(item):
        c, k, obs, _ = item
        return solve_map(MapProblem(system, obs, noise, lam, n))

    results = _map_threads(one, items, args.threads)
    outputs, per_case = [], {}
    for (c, k, _, path), res in zip(items, results):
        out = run.out / "regularize" / f"case{c}_set{k}.csv"
        outputs.append(formats.write_damage(out, res.d, {
            "case": c, "set": k, "lambda": lam, "objective": res.objective,
            "converged": res.converged, "iterations": res.iterations}))
        per_case.setdefault(c, []).append(res.d)
    for c, ds in per_case.items():
        outputs.append(formats.write_statistics(
            run.out / "regularize" / f"case{c}_stats.csv", reconstruction_statistics(ds),
            {"case": c, "lambda": lam, "sets": len(ds)}))
    run.record("regularize", started, [i[3] for i in items], outputs, **{"lambda": lam})
    _say(f"regularize: {len(items)} MAP estimates at lambda={lam:g}")
    return outputs


def _parse_events(specs, names):
    events = []
    for spec in specs or []:
        box = {}
        for part in spec.split(";"):
            key, _, rng = part.partition("=")
            key = key.strip()
            try:
                lo, hi = (float(v) for v in rng.split(","))
            except ValueError:
                raise ConfigError(f"bad event bounds {part!r}; expected name=lo,hi") from None
            if key not in names:
                raise ConfigError(f"unknown event parameter {key!r}; use one of {names}")
            box[key] = (lo, hi)
        events.append((spec, box))
    return events


def cmd_sacom(args, cfg):
    started = time.perf_counter()
    run = Run(args.out, cfg, args.seed)
    n = cfg["preprocess"]["modes"]
    p = beam_config(cfg).sensor_count
    sc = cfg["sacom"]
    system = assemble_system(beam_config(cfg, "sacom"))
    noise, _ = formats.read_noise_model(args.noise or run.out / "noise.csv", n, p)
    groups = _selected(_load_modal(args.input or run.out / "modal", n, p),
                       args.cases if args.cases is not None else [max(cfg_cases(cfg))])
    count = args.J or sc["samples"]
    bins = args.I or sc["bins"]
    ranges = (tuple(sc["amplitude"]), tuple(sc["width"]), (0.0, system.config.length))
    samples = uniform_samples(ranges, count, args.seed)
    forward = beam_forward(system, n)
    images = push_forward(forward, samples, noise.dim, args.threads)
    events = _parse_events(args.event, ["A", "w", "pos"])
    outputs, inputs, event_rows = [], [], []
    res = sc["resolution"]
    for c, sets in groups.items():
        k, obs, path = sets[0]
        inputs.append(path)
        density = DataDensity.from_measurement(obs, noise)
        tess = tessellate_data_space(density, bins, args.seed)
        measure = run_sacom(density, ranges, count, forward, args.seed, bins, tess,
                            samples=samples, images=images)
        info = {"case": c, "set": k, "J": count, "I": bins, "total": measure.total,
                "failures": measure.failures, "clipped": measure.clipped}
        base = run.out / "sacom" / f"case{c}"
        for dims in (("pos", "A"), ("w",), ("A", "w", "pos")):
            edges, dens = marginal_density(measure, dims, res)
            info_d = dict(info)
            if len(dims) == 2:
                info_d["mode"] = [float(v) for v in marginal_mode(edges, dens)]
            outputs.append(formats.write_marginal(
                f"{base}_marginal_{'_'.join(dims)}.csv", dims, edges, dens, info_d))
        if args.dump:
            outputs.append(formats.write_samples(f"{base}_samples.csv", measure, info))
        for i, (spec, box) in enumerate(events):
            prob = event_probability(measure, box)
            event_rows.append([c, i, prob, measure.total])
            print(f"case {c} event {spec}: P = {prob:.6g} (total {measure.total:.6g})")
    if events:
        outputs.append(formats.write_table(
            run.out / "sacom" / "events.csv", "events", ["case", "event", "probability", "total"],
            event_rows, {"events": [e[0] for e in events]}))
    run.record("sacom", started, inputs, outputs, J=count, I=bins)
    _say(f"sacom: {len(groups)} measurement(s), J={count}, I={bins}")
    return outputs


def cfg_cases(cfg):
    return range(len(cfg["simulation"]["damage_levels"]))


def cmd_enkf(args, cfg):
    started = time.perf_counter()
    run = Run(args.out, cfg, args.seed)
    ec = cfg["enkf"]
    beam = beam_config(cfg, "enkf")
    ecfg = EnkfConfig(
        beam=beam, ensemble_size=ec["ensemble_size"],
        window_seconds=args.window if args.window is not None else ec["window_seconds"],
        stride=args.stride if args.stride is not None else ec["stride"],
        substeps=ec["substeps"], seed=args.seed,
    )
    system = assemble_system(beam)
    files = _inputs(args.input or run.out / "measurements", "case*_set*.csv", "measurement sets")
    files = [f for f in files if args.cases is None or _case_set(f)[0] in args.cases]
    if not files:
        raise FileNotFoundError("no measurement sets match the requested cases")

    def one(path):
        c, k = _case_set(path)
        mset = formats.read_measurement_set(path, sensors=system.n_sensors)
        # each set gets its own stream family so results do not depend on scheduling
        cfg_k = EnkfConfig(**{**ecfg.__dict__, "seed": _set_seed(args.seed, c, k)})
        return c, k, path, run_smoother(mset, cfg_k, system)

    outputs, per_case = [], {}
    for c, k, path, res in _map_threads(one, files, args.threads):
        outputs.append(formats.write_enkf(run.out / "enkf" / f"case{c}_set{k}.csv", res,
                                          {"case": c, "set": k, "source": path.name}))
        per_case.setdefault(c, []).append(res.final_damage)
    for c, ds in sorted(per_case.items()):
        outputs.append(formats.write_statistics(
            run.out / "enkf" / f"case{c}_stats.csv", reconstruction_statistics(ds),
            {"case": c, "sets": len(ds), "window_seconds": ecfg.window_seconds,
             "stride": ecfg.stride}))
    run.record("enkf", started, files, outputs)
    _say(f"enkf: {len(files)} measurement sets")
    return outputs


def cmd_report(args, cfg):
    from . import plotting

    started = time.perf_counter()
    run = Run(args.out, cfg, args.seed)
    rdir = run.out / "report"
    outputs, rows, sections = [], [], []
    length = cfg["beam"]["length"]
    target = (cfg["simulation"]["damaged_element"] - 0.5) * length / cfg["beam"]["elements"]
    for method in ("enkf", "regularize"):
        stats_files = sorted((run.out / method).glob("case*_stats.csv"))
        if not stats_files:
            _say(f"report: no {method} results, skipped")
            continue
        sections.append(method)
        for path in stats_files:
            stats, meta = formats.read_statistics(path)
            c = meta["case"]
            mean = stats["mean"]
            peak = int(np.argmax(mean))
            pos = (peak + 0.5) * length / mean.size
            rows.append([sections.index(method), c, peak + 1, pos, mean[peak], stats["max"].max()])
            rdir.mkdir(parents=True, exist_ok=True)
            outputs.append(plotting.plot_damage_statistics(
                rdir / f"{method}_case{c}.png", stats, length,
                title=f"{method} case {c}", truth=target))
    sacom_files = sorted((run.out / "sacom").glob("case*_marginal_pos_A.csv"))
    if sacom_files:
        sections.append("sacom")
        for path in sacom_files:
            names, edges, dens, meta = formats.read_marginal(path)
            c = meta["case"]
            mode = meta["mode"]
            rows.append([sections.index("sacom"), c, element_containing(mode[0], beam_config(cfg)) + 1,
                         mode[0], mode[1], meta["total"]])
            rdir.mkdir(parents=True, exist_ok=True)
            outputs.append(plotting.plot_marginal_2d(
                rdir / f"sacom_case{c}_pos_A.png", names, edges, dens, title=f"SACOM case {c}"))
            w_path = path.with_name(path.name.replace("pos_A", "w"))
            if w_path.exists():
                wn, we, wd, _ = formats.read_marginal(w_path)
                outputs.append(plotting.plot_marginal_1d(
                    rdir / f"sacom_case{c}_w.png", wn[0], we[0], wd))
    else:
        _say("report: no sacom results, skipped")
    if not sections:
        print("nothing to report")
        run.record("report", started, [], [], status="nothing to report")
        return []
    # method codes index the "methods" metadata list
    outputs.append(formats.write_table(
        rdir / "summary.csv", "summary",
        ["method", "case", "peak_element", "peak_position", "peak_value", "extra"], rows,
        {"methods": sections,
         "extra": "max over sets for enkf/regularize; total measure for sacom"}))
    run.record("report", started, [], outputs, sections=sections)
    _say(f"report: sections {', '.join(sections)}")
    return outputs


# entry point ---------------------------------------------------------------

def _cases(text):
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog="vibdamage", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--seed", type=int, default=None, help="master seed (default: config)")
    common.add_argument("--out", default="run", help="run directory (default: ./run)")
    common.add_argument("--threads", type=int, default=1, help="worker thread cap")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="generate measurement sets")
    p = sub.add_parser("preprocess", parents=[common], help="modal identification")
    p.add_argument("--input", help="measurement directory (default: RUN/measurements)")
    p = sub.add_parser("noise", parents=[common], help="noise statistics")
    p.add_argument("--input", help="modal directory (default: RUN/modal)")
    p = sub.add_parser("enkf", parents=[common], help="ensemble smoother")
    p.add_argument("--input", help="measurement directory")
    p.add_argument("--cases", type=_cases, help="comma-separated damage cases")
    p.add_argument("--window", type=float, help="window length in seconds")
    p.add_argument("--stride", type=int, help="decimation stride")
    p = sub.add_parser("regularize", parents=[common], help="MAP estimates")
    p.add_argument("--input", help="modal directory")
    p.add_argument("--noise", help="noise model file")
    p.add_argument("--cases", type=_cases)
    p.add_argument("--lambda", dest="lam", type=float, help="prior scale")
    p = sub.add_parser("sacom", parents=[common], help="measure-theoretic inversion")
    p.add_argument("--input", help="modal directory")
    p.add_argument("--noise", help="noise model file")
    p.add_argument("--cases", type=_cases, help="cases to invert (default: last)")
    p.add_argument("-J", dest="J", type=int, help="parameter samples")
    p.add_argument("-I", dest="I", type=int, help="data-space bins")
    p.add_argument("--event", action="append",
                   help="rectangular event, e.g. 'w=0,0.1;pos=0.2,0.3' (repeatable)")
    p.add_argument("--dump", action="store_true", help="write the weighted sample dump")
    sub.add_parser("report", parents=[common], help="tables and figures")
    return parser


COMMANDS = {
    "simulate": cmd_simulate, "preprocess": cmd_preprocess, "noise": cmd_noise,
    "enkf": cmd_enkf, "regularize": cmd_regularize, "sacom": cmd_sacom, "report": cmd_report,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.config)
        if args.seed is None:
            args.seed = cfg["seed"]
        cfg["seed"] = args.seed
        COMMANDS[args.command](args, cfg)
    except (ConfigError, FormatError, ValueError) as exc:
        _say(f"error: {exc}")
        return EXIT_VALIDATION
    except (NumericalError, VibDamageError, np.linalg.LinAlgError) as exc:
        _say(f"numerical error: {exc}")
        return EXIT_NUMERICAL
    except OSError as exc:
        _say(f"I/O error: {exc}")
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
