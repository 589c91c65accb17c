"""Stage runner: gen, fit, products, boundary, cone, homotopy, functions."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as cio
from .boundary import build_boundary, diagnostics, sandwich_check
from .cone import (ConeMaps, audit_roundtrips, build_radial_contraction, contraction_audit,
                   log_modulus_audit, pseudocontinuity_audit)
from .convexity import ViolationCurve, fit_convexity, lemma44_audit, scan_tuples, verify_convexity
from .errors import CCXError, SchemaError
from .functions import (classify_function, compactification_bound, constant_field,
                        direction_field, extend_to_boundary, pullback_field, radius_field)
from .homotopy import audit_schedule, build_schedule, extract_bicombing, phi_and_track
from .products import audit_product_laws
from .spaces import SpaceRecipe, gen_space

STAGES = ("gen", "fit", "products", "boundary", "cone", "homotopy", "functions")
ALIASES = {"convexity": "fit", "spaces": "gen", "metric-core": "gen", "cli": "functions"}
EXIT = {"config": 2, "gen": 10, "fit": 11, "products": 12, "boundary": 13, "cone": 14,
        "homotopy": 15, "functions": 16}


@dataclass
class PipelineConfig:
    recipe: SpaceRecipe
    horizon: float | None = None
    epsilon: float | None = None
    budget: int = 1_000_000
    seed: int = 0
    out: str = "run"
    functions: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        if not isinstance(d, dict) or "recipe" not in d:
            raise SchemaError("config needs a 'recipe' object")
        rec = SpaceRecipe.from_dict(d["recipe"])
        return cls(rec, d.get("horizon"), d.get("epsilon"), int(d.get("budget", 1_000_000)),
                   int(d.get("seed", 0)), d.get("out", "run"), dict(d.get("functions", {})))

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise SchemaError(f"malformed config JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
        except OSError as e:
            raise SchemaError(f"cannot read config: {e}") from None
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return {"recipe": self.recipe.to_dict(), "horizon": self.horizon, "epsilon": self.epsilon,
                "budget": self.budget, "seed": self.seed, "functions": self.functions}


class StageFailure(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage
        self.exit_code = EXIT[stage]


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


class Run:
    """One pipeline run writing into a single output directory."""

    def __init__(self, config: PipelineConfig, out=None, expect_violation=()):
        self.cfg = config
        self.out = Path(out or config.out)
        self.expect = {ALIASES.get(m, m) for m in expect_violation}
        self.files: list = []
        self.summary: dict = {"config": config.to_dict(), "stages": {}}
        self.state: dict = {}

    # ------------------------------------------------------------ helpers
    def _write(self, name: str, kind: str, data) -> None:
        cio.write(self.out / name, kind, data, seed=self.cfg.seed,
                  constants=self.state["table"].to_dict() if "table" in self.state else None)
        self.files.append(name)

    def _text(self, name: str, text: str) -> None:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
        self.files.append(name)

    def _figure(self, src: str, kind: str, name: str) -> None:
        from .plotting import plot
        plot(self.out / src, kind, self.out / name)
        self.files.append(name)

    def _verdict(self, stage: str, ok: bool, detail: dict) -> None:
        self.summary["stages"][stage] = {"ok": bool(ok), **detail}
        if not ok and stage not in self.expect:
            raise StageFailure(stage, f"audit violations in stage {stage}")

    # ------------------------------------------------------------ stages
    def gen(self):
        X, L = gen_space(self.cfg.recipe)
        self.state.update(X=X, L=L)
        self._write("space.json", "space", cio.space_to_dict(X))
        self._write("system.json", "system", cio.system_to_dict(L))
        self.summary["stages"]["gen"] = {"ok": True, "points": X.n, "segments": len(L.segments),
                                         "rays": len(L.rays)}

    def fit(self):
        X, L = self.state["X"], self.state["L"]
        res = fit_convexity(X, L, sample_budget=self.cfg.budget, seed=self.cfg.seed)
        if isinstance(res, ViolationCurve):
            self._write("violation_curve.json", "violation-curve", res.to_dict())
            self.summary["stages"]["fit"] = {"ok": False, "best_C": res.best_C, "cap": res.cap}
            if "fit" in self.expect:
                self.state["stop"] = True
                return
            raise StageFailure("fit", "no convexity certificate within the E cap")
        table = res.derived
        if self.cfg.epsilon is not None:
            table = table.with_epsilon(self.cfg.epsilon)
        self.state.update(cert=res, table=table)
        self._write("certificate.json", "certificate", res.to_dict())
        self._write("constants.json", "constants", table.to_dict())
        audits = {m: verify_convexity(X, L, table, m, sample_budget=self.cfg.budget // 4,
                                      seed=self.cfg.seed, slack=res.slack)
                  for m in ("segments", "rays")}
        audits["same_origin"] = lemma44_audit(X, L, table, seed=self.cfg.seed, slack=res.slack)
        self._write("convexity_audit.json", "convexity-audit", {k: a.to_dict() for k, a in audits.items()})
        if not all(a.ok for a in audits.values()):
            # the fitted constants are refuted by the replay; record the gap profile
            scan = scan_tuples(X, L, self.cfg.budget, self.cfg.seed)
            keys = sorted(scan.bins)
            curve = ViolationCurve([2.0 ** b for b in keys], [scan.bins[b][0] for b in keys],
                                   [scan.bins[b][1] for b in keys], res.C, 0.25 * X.diameter, res.E,
                                   self.cfg.seed)
            self._write("violation_curve.json", "violation-curve", curve.to_dict())
            if "fit" in self.expect:
                self.state["stop"] = True
        self._verdict("fit", all(a.ok for a in audits.values()),
                      {"E": res.E, "C": res.C, "slack": res.slack,
                       "violations": {k: a.n_violations for k, a in audits.items()}})

    def _model(self):
        if "model" not in self.state:
            X, L, t = self.state["X"], self.state["L"], self.state["table"]
            self.state["model"] = build_boundary(X, L, t, self.cfg.horizon)
        return self.state["model"]

    def products(self):
        model = self._model()
        L = self.state["L"]
        eng = model.engine(L)
        self.state["engine"] = eng
        rep = audit_product_laws(eng, seed=self.cfg.seed)
        self._write("products.json", "product-laws", rep.to_dict())
        ents = [("class", c) for c in range(model.n_classes)]
        pts = sorted(eng.reps)[:: max(1, len(eng.reps) // 16)][:16]
        ents += [("point", int(v)) for v in pts if not eng.in_ball(v)]
        self._text("products.csv", eng.table_for(ents).to_csv())
        self._verdict("products", rep.ok, {"violations": {k: r.violations for k, r in rep.laws.items()}})

    def boundary(self):
        model = self._model()
        sw = sandwich_check(model)
        diag = {}
        if model.ray_info and all("angle" in i for i in model.ray_info) and model.n_classes:
            d = diagnostics(model, "circle")
            diag["circle"] = d.to_dict()
            self._text("circle.csv", _csv(["angle", "product", "invariant"], d.rows))
            self._figure("circle.csv", "boundary-circle", "circle.svg")
        if model.n_classes:
            diag["entourage"] = diagnostics(model, "entourage", L=self.state["L"],
                                            seed=self.cfg.seed).to_dict()
        data = model.to_dict()
        data["sandwich"] = {"ok": sw.ok, "lower_worst": sw.lower_worst, "upper_worst": sw.upper_worst,
                            "witnesses": sw.witnesses}
        data["diagnostics"] = diag
        self._write("boundary.json", "boundary", data)
        ok = sw.ok and all(v["ok"] for k, v in diag.items() if k == "entourage")
        self._verdict("boundary", ok, {"classes": model.n_classes, "horizon": model.horizon,
                                       "circle_ok": diag.get("circle", {}).get("ok"),
                                       "caveats": model.caveats})

    def cone(self):
        model = self._model()
        if not model.n_classes:
            self._text("bound_curve.csv", _csv(["t", "displacement", "bound"], []))
            self._verdict("cone", True, {"empty": True})
            return
        maps = ConeMaps(model)
        self.state["maps"] = maps
        rt = audit_roundtrips(maps)
        pc = pseudocontinuity_audit(maps)
        lm = log_modulus_audit(maps, seed=self.cfg.seed)
        r = build_radial_contraction(maps)
        ca = contraction_audit(maps, r, seed=self.cfg.seed)
        self._write("cone.json", "cone", {"roundtrips": rt.to_dict(), "pseudocontinuity": pc.to_dict(),
                                          "log_modulus": lm.to_dict(), "contraction": r.to_dict(),
                                          "contraction_audit": ca.to_dict()})
        self._text("bound_curve.csv", rt.log_exp.bound_csv())
        self._figure("bound_curve.csv", "bound-curve", "bound_curve.svg")
        self._verdict("cone", rt.ok and pc.ok and lm.ok and ca.ok,
                      {"exp_log": rt.exp_log.violations, "log_exp": rt.log_exp.violations,
                       "pseudocontinuity": pc.violations, "log_modulus": lm.violations,
                       "contraction": ca.violations})

    def homotopy(self):
        X, L, cert = self.state["X"], self.state["L"], self.state["cert"]
        maps = self.state.get("maps") or ConeMaps(self._model())
        sc = build_schedule(X, L, maps)
        au = audit_schedule(sc, seed=self.cfg.seed)
        A, B = cert.affine_theta or (1.0, 0.0)
        t = self.state["table"]
        bi = extract_bicombing(X, L, t.lam, t.k + X.meta.get("grid_slack", 0.0), t.E, t.C, A, B,
                               seed=self.cfg.seed)
        self._write("schedule.json", "schedule", sc.to_dict())
        self._write("homotopy.json", "homotopy-audit", {"schedule": au.to_dict(), "bicombing": bi.to_dict()})
        rows = []
        for v in sc.net[:: max(1, len(sc.net) // 40)][:40]:
            v = int(v)
            _, track, grid = phi_and_track(sc, v)
            start = track[0]
            for tt, p in zip(grid, track):
                rows.append((X.points[v], float(tt), X.points[p], float(X.d(start, p))))
        self._text("tracks.csv", _csv(["v", "t", "point", "displacement"], rows))
        self._figure("tracks.csv", "homotopy-heatmap", "homotopy_heatmap.svg")
        self._verdict("homotopy", au.ok and bi.ok, {"ni": sc.ni, "bicombing": [bi.k1_emp, bi.k2_emp],
                                                    "bicombing_bound": [bi.k1_bound, bi.k2_bound]})

    def functions(self):
        X, L = self.state["X"], self.state["L"]
        model, t = self._model(), self.state["table"]
        eng = self.state.get("engine") or model.engine(L)
        opts = {"eps_f": 0.5, "R": 1.0, "n": 3, **self.cfg.functions}
        out, ok = {}, True
        const = constant_field(X)
        out["constant"] = {"slowly_oscillating": classify_function(const, X, "slowly-oscillating",
                                                                   opts["eps_f"], opts["R"]).to_dict(),
                           "gromov": classify_function(const, X, "gromov", opts["eps_f"], engine=eng,
                                                       seed=self.cfg.seed).to_dict()}
        ok &= out["constant"]["slowly_oscillating"]["passed"] and out["constant"]["gromov"]["passed"]
        out["radius"] = classify_function(radius_field(X), X, "slowly-oscillating", opts["eps_f"],
                                          opts["R"]).to_dict()
        if model.n_classes:
            nc = model.n_classes
            pb = pullback_field(model, lambda c: np.exp(2j * math.pi * c / nc))
            out["pullback"] = {"gromov": classify_function(pb, X, "gromov", opts["eps_f"], engine=eng,
                                                           seed=self.cfg.seed).to_dict(),
                               "extension": extend_to_boundary(pb, model).to_dict()}
        if X.coords is not None and X.coords.shape[1] == 2:
            df = direction_field(X)
            out["direction"] = {"gromov": classify_function(df, X, "gromov", opts["eps_f"], engine=eng,
                                                            seed=self.cfg.seed).to_dict(),
                                "extension": extend_to_boundary(df, model).to_dict()}
        cb = compactification_bound(X, L, t, opts["R"], int(opts["n"]), seed=self.cfg.seed, engine=eng)
        out["compactification"] = cb.to_dict()
        ok &= cb.violations == 0
        self._write("functions.json", "functions", out)
        self._verdict("functions", ok, {"compactification_radius": cb.radius,
                                        "compactification_violations": cb.violations})

    # ------------------------------------------------------------ driver
    def execute(self, until: str = "functions") -> int:
        code = 0
        try:
            for stage in STAGES[: STAGES.index(until) + 1]:
                try:
                    getattr(self, stage)()
                except StageFailure:
                    raise
                except CCXError as e:
                    self.summary["stages"][stage] = {"ok": False, "error": type(e).__name__,
                                                     "message": str(e)}
                    raise StageFailure(stage, str(e)) from e
                if self.state.get("stop"):
                    break
        except StageFailure as e:
            self.summary["failed_stage"] = e.stage
            self.summary["message"] = str(e)
            code = e.exit_code
        self.summary["exit_code"] = code
        self.summary["expected_violations"] = sorted(self.expect)
        cio.write(self.out / "summary.json", "summary", self.summary)
        self.files.append("summary.json")
        self.write_manifest()
        return code

    def write_manifest(self):
        entries = []
        for name in sorted(set(self.files)):
            b = (self.out / name).read_bytes()
            entries.append({"file": name, "sha256": hashlib.sha256(b).hexdigest(), "bytes": len(b)})
        cio.write(self.out / "manifest.json", "manifest", entries, seed=self.cfg.seed)
