"""``lamlab`` command line: JSON config in, CSV/JSON results plus a run manifest out."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np

from . import exactz, mc
from .blockspin import BlockModel, coarse_grain
from .contour import ColumnBox, audit_bounds, classify_columns, extract_contours
from .groundcycle import ground_states, peierls_audit
from .laminate import LaminatedModel, ModelStats, choose_parameters, default_rho
from .lattice import CapacityError, Configuration, Window
from .potential import Hamiltonian, agreement, disagreement, field as field_potential

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_CAPACITY = 0, 1, 2, 3
SCHEMA_VERSION = 1

# -- schemas ------------------------------------------------------------------

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}
_NUM_LIST = {"type": "array", "items": _NUM, "minItems": 1}

_HAMILTONIAN = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "spins": {"type": "array", "items": {"type": ["string", "integer"]}, "minItems": 1},
                "dimension": _POS_INT,
                "period": _POS_INT,
                "denominator": _POS_INT,
                "terms": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {
                            "pattern": {"type": "array", "minItems": 1},
                            "table": {"type": "object",
                                      "additionalProperties": {"type": ["number", "string"]}},
                            "residue": {},
                        },
                        "required": ["pattern", "table"],
                        "additionalProperties": False,
                    },
                },
            },
            "required": ["spins", "terms"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "builtin": {"enum": ["disagreement", "agreement", "field"]},
                "nspin": {"type": "integer", "minimum": 2},
                "J": {"type": ["number", "string"]},
                "values": {"type": "array", "items": {"type": ["number", "string"]}, "minItems": 1},
                "exact": {"type": "boolean"},
            },
            "required": ["builtin"],
            "additionalProperties": False,
        },
    ]
}

_MODEL = {
    "type": "object",
    "properties": {
        "horizontal": _HAMILTONIAN,
        "perturbations": {"type": "array", "items": _HAMILTONIAN},
        "mu": {"type": "array", "items": _NUM},
        "lambda": {"type": "number", "minimum": 0},
        "l": _POS_INT,
        "rbar": {"type": "number", "exclusiveMinimum": 0},
        "beta": {"type": "number", "exclusiveMinimum": 0},
        "ground_states": {"type": "array"},
        "peierls_c": {"type": ["number", "string", "null"]},
    },
    "required": ["horizontal", "lambda", "l", "rbar", "beta"],
    "additionalProperties": False,
}

_CONFIGURATION = {
    "type": "object",
    "properties": {
        "spins": {"type": "array", "minItems": 1},
        "q": {"type": "integer", "minimum": 0},
        "lo": {"type": "array", "items": {"type": "integer"}},
    },
    "required": ["spins", "q"],
    "additionalProperties": False,
}


def _schema(command: str, properties: dict, required: list) -> dict:
    return {
        "type": "object",
        "properties": {"schema": {"const": f"lamlab.{command}/{SCHEMA_VERSION}"}, **properties},
        "required": ["schema", *required],
        "additionalProperties": False,
    }


SCHEMAS = {
    "ground-states": _schema("ground-states", {
        "hamiltonian": _HAMILTONIAN, "block_size": _POS_INT, "tolerance": _NUM}, ["hamiltonian"]),
    "coarse-grain": _schema("coarse-grain", {
        "hamiltonian": _HAMILTONIAN, "block_size": _POS_INT}, ["hamiltonian", "block_size"]),
    "peierls": _schema("peierls", {
        "hamiltonian": _HAMILTONIAN, "block_size": _POS_INT, "audit_length": _POS_INT}, ["hamiltonian"]),
    "contours": _schema("contours", {"model": _MODEL, "configuration": _CONFIGURATION},
                        ["model", "configuration"]),
    "audit-bounds": _schema("audit-bounds", {
        "model": _MODEL, "configuration": _CONFIGURATION, "rho": {"type": "number", "exclusiveMinimum": 0},
        "tau": {"type": "number", "exclusiveMinimum": 0}}, ["model", "configuration"]),
    "exact-z": _schema("exact-z", {
        "model": _MODEL,
        "grid": {
            "type": "object",
            "properties": {
                "boxes": {"type": "array", "minItems": 1,
                          "items": {"type": "array", "items": _POS_INT, "minItems": 2, "maxItems": 2}},
                "q": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "beta": _NUM_LIST,
                "lambda": _NUM_LIST,
            },
            "required": ["boxes", "q", "beta", "lambda"],
            "additionalProperties": False,
        }}, ["model", "grid"]),
    "transfer": _schema("transfer", {
        "model": _MODEL, "widths": {"type": "array", "items": _POS_INT, "minItems": 1},
        "beta": _NUM_LIST, "lambda": _NUM_LIST}, ["model", "widths"]),
    "sample": _schema("sample", {
        "model": _MODEL,
        "chain": {
            "type": "object",
            "properties": {
                "shape": {"type": "array", "items": _POS_INT, "minItems": 2},
                "q": {"type": ["integer", "null"], "minimum": 0},
                "beta": {"type": "number", "minimum": 0},
                "sweeps": _POS_INT,
                "thermalization": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "stride": _POS_INT,
                "periodic": {"type": "boolean"},
                "init": {"enum": ["ground", "random"]},
            },
            "required": ["shape", "sweeps"],
            "additionalProperties": False,
        }}, ["model", "chain"]),
    "scan": _schema("scan", {
        "model": _MODEL, "beta": {"type": "number", "minimum": 0}, "lambda_grid": _NUM_LIST,
        "shape": {"type": "array", "items": _POS_INT, "minItems": 2},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "sweeps": _POS_INT, "thermalization": {"type": "integer", "minimum": 0}, "stride": _POS_INT,
        "level": _NUM}, ["model", "lambda_grid", "shape", "seeds", "sweeps"]),
}


class ValidationError(Exception):
    pass


# -- config loading -----------------------------------------------------------

def _locate(text: str, path) -> int:
    """Character offset of the JSON value at ``path`` (falls back to the deepest prefix found)."""
    dec = json.JSONDecoder()
    ws = " \t\r\n"

    def skip(i):
        while i < len(text) and text[i] in ws:
            i += 1
        return i

    pos = skip(0)
    for key in path:
        if pos >= len(text):
            break
        if text[pos] == "{":
            i = skip(pos + 1)
            found = None
            while i < len(text) and text[i] != "}":
                k, i = dec.raw_decode(text, i)
                i = skip(skip(i) + 1)
                if k == key:
                    found = i
                    break
                _, i = dec.raw_decode(text, i)
                i = skip(i)
                if text[i] == ",":
                    i = skip(i + 1)
            if found is None:
                return pos
            pos = found
        elif text[pos] == "[" and isinstance(key, int):
            i = skip(pos + 1)
            for _ in range(key):
                _, i = dec.raw_decode(text, i)
                i = skip(skip(i) + 1)
            pos = i
        else:
            break
    return pos


def _line_col(text: str, pos: int):
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def load_config(path, command: str) -> dict:
    """Parse and validate a config file; raises ValidationError with line:column."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    validator = jsonschema.Draft202012Validator(SCHEMAS[command])
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        where_path = list(err.absolute_path)
        if err.validator == "additionalProperties" and isinstance(err.instance, dict):
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            where_path += extra[:1]
        line, col = _line_col(text, _locate(text, where_path))
        where = "/".join(map(str, err.absolute_path)) or "<root>"
        raise ValidationError(f"{path}:{line}:{col}: {where}: {err.message}")
    return doc


def canonical_digest(doc) -> str:
    """sha256 of the canonical JSON form (sorted keys, no whitespace)."""
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def build_hamiltonian(doc: dict) -> Hamiltonian:
    if "builtin" not in doc:
        return Hamiltonian.from_dict(doc)
    kind = doc["builtin"]
    exact = doc.get("exact", True)
    if kind == "disagreement":
        return disagreement(doc.get("nspin", 2), doc.get("J", 1), exact=exact)
    if kind == "agreement":
        return agreement(doc.get("nspin", 2), doc.get("J", 1), exact=exact)
    if "values" not in doc:
        raise ValidationError("builtin field potential needs 'values'")
    return field_potential(doc["values"], exact=exact)


def build_model(doc: dict) -> LaminatedModel:
    full = dict(doc)
    full["horizontal"] = build_hamiltonian(doc["horizontal"]).to_dict()
    full["perturbations"] = [build_hamiltonian(h).to_dict() for h in doc.get("perturbations", [])]
    full.setdefault("mu", [])
    if len(full["mu"]) != len(full["perturbations"]):
        raise ValidationError("mu and perturbations must have the same length")
    if full.get("peierls_c") == "inf":
        full["peierls_c"] = math.inf
    return LaminatedModel.from_dict(full)


def build_configuration(doc: dict, model: LaminatedModel) -> Configuration:
    spins = np.array(doc["spins"], dtype=np.int64)
    if spins.ndim != model.dim:
        raise ValidationError(f"configuration spins must be a {model.dim}-dimensional array")
    if spins.min() < 0 or spins.max() >= model.nspin:
        raise ValidationError("configuration spins out of range")
    lo = tuple(doc.get("lo", (0,) * model.dim))
    window = Window.from_shape(spins.shape, lo)
    return Configuration(window, spins, model.lifted(doc["q"]), doc["q"])


# -- output -------------------------------------------------------------------

def atomic_write(path: Path, data: str):
    """Write via a temporary file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=",", lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(x) for x in row])
    return buf.getvalue()


def _cell(x):
    if isinstance(x, np.generic):
        x = x.item()
    return repr(x) if isinstance(x, float) else x


def json_text(doc) -> str:
    return json.dumps(_plain(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass
class RunManifest:
    command: str
    config_path: str
    config_digest: str
    config: dict
    tool_version: str
    seeds: list
    threads: int
    tolerance: float | None
    started: str
    finished: str = ""
    outputs: dict = field(default_factory=dict)
    environment: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


# -- blockmodel cache ---------------------------------------------------------

def cached_coarse_grain(H: Hamiltonian, N: int) -> BlockModel:
    """coarse_grain, memoised on disk under $LAMLAB_CACHE when it is set."""
    root = os.environ.get("LAMLAB_CACHE")
    if not root:
        return coarse_grain(H, N)
    key = canonical_digest({"hamiltonian": H.to_dict(), "block_size": N})
    path = Path(root) / f"blockmodel-{key}.json"
    if path.exists():
        return BlockModel.from_dict(json.loads(path.read_text(encoding="utf-8")))
    m = coarse_grain(H, N)
    atomic_write(path, json.dumps(m.to_dict(), sort_keys=True))
    return m


# -- commands -----------------------------------------------------------------
# Each returns {filename: text}; the manifest is added by run().

def _default_block(H: Hamiltonian) -> int:
    return H.period * max(1, math.ceil(max(H.range, 1) / H.period))


def cmd_ground_states(cfg, args):
    H = build_hamiltonian(cfg["hamiltonian"])
    N = cfg.get("block_size", _default_block(H))
    tol = args.tolerance if args.tolerance is not None else cfg.get("tolerance")
    rep = ground_states(H, N, tol)
    doc = rep.to_dict()
    doc["ground_states"] = [list(w) for w in rep.periods()]
    e = rep.specific_energy()
    doc["specific_energy"] = e if isinstance(e, float) else str(e)
    return {"ground_states.json": json_text(doc)}


def cmd_coarse_grain(cfg, args):
    H = build_hamiltonian(cfg["hamiltonian"])
    m = cached_coarse_grain(H, cfg["block_size"])
    return {"block_model.json": json_text(m.to_dict())}


def cmd_peierls(cfg, args):
    H = build_hamiltonian(cfg["hamiltonian"])
    N = cfg.get("block_size", _default_block(H))
    rep = ground_states(H, N, args.tolerance)
    length = cfg.get("audit_length", 12)
    audits = []
    c = rep.peierls_c
    if c == c and c != math.inf:
        for q in rep.ground_blocks:
            a = peierls_audit(rep.block_model, rep.ground_blocks, q, c, rep.shift, length)
            audits.append({"q": q, "violations": a.violations, "checked": a.checked,
                           "min_slack": a.min_slack})
    doc = {"peierls_c": rep.to_dict()["peierls_c"], "Q": rep.ground_blocks,
           "block_size": rep.block_size, "audit_length": length, "audits": audits}
    return {"peierls.json": json_text(doc)}


def cmd_contours(cfg, args):
    model = build_model(cfg["model"])
    s = build_configuration(cfg["configuration"], model)
    cls_ = classify_columns(s, model)
    gs = extract_contours(s, model, cls_)
    doc = {"counts": cls_.counts(), "contours": [g.to_dict() for g in gs]}
    return {"contours.json": json_text(doc)}


def cmd_audit_bounds(cfg, args):
    model = build_model(cfg["model"])
    s = build_configuration(cfg["configuration"], model)
    if "rho" in cfg:
        rho = cfg["rho"]
    else:
        rho, _ = default_rho(model)
    stats = ModelStats.of(model)
    params = choose_parameters(model.beta, rho, cfg.get("tau", 1.0), stats)
    rows = []
    for k, g in enumerate(extract_contours(s, model)):
        audit = audit_bounds(g, model, rho, params.u, params.v, stats.kappa)
        for chk in audit.checks:
            rows.append([k, chk.name, chk.lhs, chk.rhs, chk.slack, int(chk.passed)])
    meta = {"parameters": params.to_dict(), "kappa": stats.kappa, "lambda": model.lam, "l": model.l,
            "meets_parameters": bool(model.l >= params.l_min and model.lam >= params.lambda0)}
    return {"audit.csv": csv_text(["contour", "check", "lhs", "rhs", "slack", "passed"], rows),
            "parameters.json": json_text(meta)}


def cmd_exact_z(cfg, args):
    model = build_model(cfg["model"])
    g = cfg["grid"]
    rows = []
    for box in g["boxes"]:
        V = ColumnBox((0, 0), tuple(box))
        for q in g["q"]:
            if q >= model.nground:
                raise ValidationError(f"grid q={q} but the model has {model.nground} ground states")
            for beta in g["beta"]:
                for lam in g["lambda"]:
                    m = model.with_beta(beta).with_lambda(lam)
                    r = exactz.verify_factorization(V, q, m)
                    rows.append([f"{box[0]}x{box[1]}", q, float(beta), float(lam), r.xi, r.log_xi, r.rhs,
                                 r.residual, r.contour_residual, r.contours, r.collections])
    header = ["box", "q", "beta", "lambda", "xi", "log_xi", "rhs", "residual", "contour_residual",
              "contours", "collections"]
    return {"exact_z.csv": csv_text(header, rows)}


def cmd_transfer(cfg, args):
    model = build_model(cfg["model"])
    betas = cfg.get("beta", [model.beta])
    lams = cfg.get("lambda", [model.lam])
    rows = []
    for W in cfg["widths"]:
        for beta in betas:
            for lam in lams:
                m = model.with_lambda(lam)
                rows.append([W, float(beta), float(lam), exactz.transfer_free_energy(m, W, beta),
                             exactz.transfer_energy(m, W, beta)])
    return {"transfer.csv": csv_text(["width", "beta", "lambda", "free_energy", "energy"], rows)}


def cmd_sample(cfg, args):
    model = build_model(cfg["model"])
    c = dict(cfg["chain"])
    c.setdefault("beta", model.beta)
    c.setdefault("q", None if c.get("periodic") else 0)
    spec = mc.ChainSpec(**c)
    res = mc.run_chain(spec, model)
    header = ["sweep", "energy", "acceptance"] + [f"fraction_{q}" for q in range(model.nground)]
    rows = [[m.sweep, m.energy, m.acceptance, *m.fractions] for m in res.measurements]
    en = res.series("energy")
    fr = res.series("fractions")
    summary = {"spec": spec.to_dict(), "acceptance": res.acceptance, "tau_energy": res.autocorrelation,
               "energy": {"mean": float(en.mean()), "stderr": mc.stderr(en)},
               "fractions": [{"mean": float(fr[:, q].mean()), "stderr": mc.stderr(fr[:, q])}
                             for q in range(fr.shape[1])],
               **res.metadata}
    return {"measurements.csv": csv_text(header, rows), "summary.json": json_text(summary)}


def cmd_scan(cfg, args):
    model = build_model(cfg["model"])
    seeds = cfg["seeds"]
    sweeps = cfg["sweeps"]
    res = mc.coexistence_scan(model, cfg.get("beta", model.beta), cfg["lambda_grid"], cfg["shape"], seeds,
                              sweeps, cfg.get("thermalization", sweeps // 5), cfg.get("stride", 10),
                              args.threads, cfg.get("level", 0.5))
    nq = model.nground
    fr = [f"fraction_{q}" for q in range(nq)]
    header = ["lambda", "q", "seed", "block", "sweep", *fr, "energy", "acceptance"]
    rows = [[r.lam, r.q_boundary, r.seed, b, m.sweep, *m.fractions, m.energy, m.acceptance]
            for r in res.rows for b, m in enumerate(r.measurements)]
    chain_header = (["lambda", "q", "seed", *fr, *(f + "_stderr" for f in fr),
                     "energy", "energy_stderr", "acceptance", "tau"])
    chains = [[r.lam, r.q_boundary, r.seed, *r.fractions, *r.fraction_stderr, r.energy, r.energy_stderr,
               r.acceptance, r.tau] for r in res.rows]
    summary = {"dependence": [{"lambda": k, "value": v, "stderr": res.dependence_stderr[k]}
                              for k, v in res.dependence.items()],
               "threshold": res.threshold, "seeds": seeds, **res.metadata}
    return {"scan.csv": csv_text(header, rows), "chains.csv": csv_text(chain_header, chains),
            "summary.json": json_text(summary)}


COMMANDS = {
    "ground-states": (cmd_ground_states, "minimal-mean-cycle ground states and Peierls constant"),
    "coarse-grain": (cmd_coarse_grain, "block-spin model of a 1D Hamiltonian"),
    "peierls": (cmd_peierls, "Peierls constant with a brute-force audit"),
    "contours": (cmd_contours, "classify columns and extract contours of a configuration"),
    "audit-bounds": (cmd_audit_bounds, "contour energy bounds on a configuration"),
    "exact-z": (cmd_exact_z, "partition-function factorization on a grid of small boxes"),
    "transfer": (cmd_transfer, "strip transfer-matrix free energy and energy"),
    "sample": (cmd_sample, "one Metropolis chain"),
    "scan": (cmd_scan, "phase-coexistence scan over lambda"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lamlab", description="Laminated lattice models: ground states, contours, "
                                             "exact partition functions and Monte Carlo.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND", parser_class=_Parser)
    for name, (_, helptext) in COMMANDS.items():
        sp = sub.add_parser(name, help=helptext, description=helptext)
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed(s)")
        sp.add_argument("--threads", type=int, default=1, help="worker cap")
        sp.add_argument("--tolerance", type=float, default=None, help="float tolerance override")
    return p


def run(argv=None) -> int:
    args = make_parser().parse_args(argv)
    if args.threads < 1:
        print("lamlab: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    fn = COMMANDS[args.command][0]
    started = _now()
    try:
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            _override_seeds(cfg, args.seed)
        outputs = fn(cfg, args)
    except ValidationError as exc:
        print(f"lamlab: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CapacityError as exc:
        print(f"lamlab: capacity exceeded: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ValueError, KeyError) as exc:
        print(f"lamlab: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = Path(args.out)
    digests = {}
    for name, text in outputs.items():
        atomic_write(out / name, text)
        digests[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()
    seeds = _config_seeds(cfg)
    manifest = RunManifest(
        command=args.command, config_path=str(Path(args.config).resolve()), config_digest=canonical_digest(cfg),
        config=cfg, tool_version=_version(), seeds=seeds, threads=args.threads, tolerance=args.tolerance,
        started=started, finished=_now(), outputs=digests,
        environment={"python": platform.python_version(), "numpy": np.__version__,
                     "rng": mc.RNG_NAME, "schedule": mc.SCHEDULE})
    atomic_write(out / "manifest.json", json_text(manifest.to_dict()))
    return EXIT_OK


def _override_seeds(cfg, seed: int):
    """--seed replaces the config seeds (seed, seed+1, ... for a scan)."""
    if "chain" in cfg:
        cfg["chain"]["seed"] = seed
    if "seeds" in cfg:
        cfg["seeds"] = [seed + k for k in range(len(cfg["seeds"]))]


def _config_seeds(cfg) -> list:
    if "seeds" in cfg:
        return list(cfg["seeds"])
    if "chain" in cfg:
        return [cfg["chain"].get("seed", 0)]
    return []


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
