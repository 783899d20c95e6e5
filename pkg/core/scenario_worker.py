"""
Scenario Worker - runs one command against a parsed scenario
"""

import logging

import numpy as np
from scipy.integrate import trapezoid

from core.aggregation import (
    aggregated_diffusion_ode,
    aggregated_flow_ode,
    diffusion_convergence_study,
    flow_convergence_study,
)
from core.coefficients import CoefficientField
from core.diffusion import assemble, equilibrium, evolve_diffusion, initial_state, residuals
from core.diffusion import state_rows as diffusion_rows
from core.errors import HasSinkOrSourceError, KernelDimensionNotOneError, SchemaError
from core.generation import check_diffusion_generation, diffusion_boundary_standard, transport_boundary
from core.graph_core import analyze_structure, line_matrices, multiplicity_zero_kirchhoff
from core.models import MutationModel, SynapticModel
from core.scenario import build_initial
from core.spectral import check_ldq, classify_long_term
from core.transport import diagnostics, evolve, grid_steps, init_state, nilpotent_extinction
from core.transport import state_rows as transport_rows

logger = logging.getLogger(__name__)

MODES = ("check", "transport", "diffuse", "analyze", "aggregate", "report")
DENSE_EQUILIBRIUM_LIMIT = 3000

TRANSPORT_COLUMNS = ("t", "edge", "cell", "s", "u")
DIFFUSION_COLUMNS = ("t", "edge", "s", "u")


class ScenarioWorker:
    """Worker for one scenario run"""

    def __init__(self, scenario, mode="check"):
        self.scenario = scenario
        self.mode = mode

        # Solver settings, overridable from the command line
        self.settings = dict(scenario.solver)
        self.eps = list(scenario.aggregation.get("eps", [])) if scenario.aggregation else []
        self.aggregation_mode = scenario.aggregation.get("mode") if scenario.aggregation else None
        self.seed = None
        self.echo_config = False

        # Optional callback(current, total)
        self.progress_callback = None

    def set_parameters(self, t_final=None, h=None, dt=None, cells=None, scheme=None,
                       record_every=None, strict=None):
        """Apply command-line overrides to the solver settings"""
        overrides = {
            "t_final": t_final,
            "h": h,
            "dt": dt,
            "cells": cells,
            "scheme": scheme,
            "record_every": record_every,
            "strict": strict,
        }
        for key, value in overrides.items():
            if value is not None:
                self.settings[key] = value

    def set_aggregation(self, mode=None, eps=None):
        if mode is not None:
            self.aggregation_mode = mode
        if eps is not None:
            self.eps = list(eps)

    def run(self):
        """
        Dispatch to the handler of the current mode

        Returns:
            Dictionary with "summary" and, for time series, "columns" and "rows"
        """
        if self.mode not in MODES:
            raise SchemaError(f"Unknown command {self.mode!r}; expected one of {MODES}")
        logger.info("Running %s on scenario %s", self.mode, self.scenario.name)
        handler = getattr(self, f"_process_{self.mode}")
        result = handler()
        logger.info("Finished %s on scenario %s", self.mode, self.scenario.name)
        return result

    def _report_progress(self, current, total):
        if self.progress_callback is not None:
            self.progress_callback(current, total)

    def _initial(self):
        return build_initial(self.scenario.initial, self.scenario.m, self.seed)

    def _boundary_matrix(self):
        model = self.scenario.model
        if isinstance(model, MutationModel):
            return model.B_w
        return None

    def _velocities(self):
        if isinstance(self.scenario.model, MutationModel):
            return self.scenario.model.velocities()
        return self.scenario.coefficients

    def _transport_verdict(self):
        g = self.scenario.graph
        try:
            boundary = transport_boundary(g, self._velocities(), self._boundary_matrix(),
                                          strict=self.settings["strict"])
        except HasSinkOrSourceError as e:
            return None, {"semigroup": False, "group": False, "reason": str(e)}
        return boundary, boundary.to_dict()

    def _diffusivities(self):
        coefficients = self.scenario.coefficients
        if coefficients.kind == "a":
            return coefficients
        return CoefficientField(edges=coefficients.edges, kind="a")

    def _diffusion_verdict(self):
        a = self._diffusivities()
        return check_diffusion_generation(diffusion_boundary_standard(self.scenario.graph, a), a).to_dict()

    def _process_check(self):
        """Generation verdicts for transport and standard diffusion"""
        g = self.scenario.graph
        _, transport = self._transport_verdict()
        report = analyze_structure(g, self._boundary_matrix())
        lines = line_matrices(g)
        summary = {
            "transport": transport,
            "diffusion": self._diffusion_verdict(),
            "is_directed_cycle": report.is_directed_cycle,
            "sinks": list(report.sinks),
            "sources": list(report.sources),
            "kirchhoff_kernel_dimension": multiplicity_zero_kirchhoff(lines.K_minus),
        }
        return {"summary": summary}

    def _process_transport(self):
        """Exact-shift transport with per-step mass and Kirchhoff diagnostics"""
        g = self.scenario.graph
        c = self._velocities()
        boundary = transport_boundary(g, c, self._boundary_matrix(), strict=self.settings["strict"])
        state = init_state(g, boundary, c, self._initial(), self.settings["h"], strict=self.settings["strict"])

        total = grid_steps(state, self.settings["t_final"])
        every = self.settings["record_every"]
        rows = transport_rows(state)
        first = diagnostics(state)
        mass_series = [first.mass]
        residual = first.kirchhoff_residual
        min_value = first.min_value
        for k in range(1, total + 1):
            state = evolve(state, state.h)
            current = diagnostics(state)
            mass_series.append(current.mass)
            residual = max(residual, current.kirchhoff_residual)
            min_value = min(min_value, current.min_value)
            if k % every == 0 or k == total:
                rows.extend(transport_rows(state))
            self._report_progress(k, total)

        report = analyze_structure(g, self._boundary_matrix())
        drift = abs(mass_series[-1] - mass_series[0]) / max(abs(mass_series[0]), 1e-300)
        summary = {
            "h": state.h,
            "cells": list(state.cells),
            "steps": total,
            "t_final": state.t,
            "snap_error": state.snap_error,
            "mass_series": mass_series,
            "relative_mass_drift": drift,
            "kirchhoff_residual": residual,
            "min_value": min_value,
            "extinction_time": nilpotent_extinction(report, state),
            "semigroup": boundary.is_semigroup,
            "group": boundary.is_group,
        }
        return {"summary": summary, "columns": TRANSPORT_COLUMNS, "rows": rows}

    def _diffusion_generator(self):
        g = self.scenario.graph
        a = self._diffusivities()
        if self.scenario.conditions == "diffusion-robin":
            model = self.scenario.model
            if not isinstance(model, SynapticModel):
                raise SchemaError("Robin diffusion needs a synaptic model")
            boundary = model.boundary()
        else:
            boundary = diffusion_boundary_standard(g, a)
        return assemble(g, a, boundary, self.settings["cells"])

    def _process_diffuse(self):
        """Implicit diffusion with mass series and boundary residuals"""
        gen = self._diffusion_generator()
        state = initial_state(gen, self._initial(), self.settings["scheme"], self.settings["dt"])
        start = state

        every = self.settings["record_every"]
        rows = diffusion_rows(gen, state)
        mass_series = [residuals(gen, state).mass]
        counter = {"k": 0}

        def observe(current):
            counter["k"] += 1
            mass_series.append(float(gen.edge_masses(current.values).sum()))
            if counter["k"] % every == 0:
                rows.extend(diffusion_rows(gen, current))

        state = evolve_diffusion(gen, state, self.settings["t_final"], observer=observe)
        if counter["k"] % every != 0:
            rows.extend(diffusion_rows(gen, state))

        final = residuals(gen, state)
        summary = {
            "cells": gen.N,
            "scheme": state.scheme,
            "dt": state.dt,
            "steps": counter["k"],
            "t_final": state.t,
            "mass_series": mass_series,
            "relative_mass_drift": abs(mass_series[-1] - mass_series[0]) / max(abs(mass_series[0]), 1e-300),
            "continuity_res": final.continuity_res,
            "flux_res": final.flux_res,
            "min_value": float(state.values.min()),
            "lambda": None,
            "equilibrium_masses": None,
        }
        if gen.size <= DENSE_EQUILIBRIUM_LIMIT:
            try:
                eq = equilibrium(gen)
                summary["lambda"] = eq.rate
                summary["equilibrium_masses"] = gen.edge_masses(eq.apply(start.values)).tolist()
            except KernelDimensionNotOneError as e:
                logger.warning("No equilibrium projection: %s", e)
        else:
            logger.info("Skipping dense equilibrium for %d unknowns", gen.size)
        return {"summary": summary, "columns": DIFFUSION_COLUMNS, "rows": rows}

    def _process_analyze(self):
        """Long-term classification of transport"""
        g = self.scenario.graph
        c = self._velocities()
        B_w = self._boundary_matrix()
        asymptotics = classify_long_term(g, c, B_w)
        report = analyze_structure(g, B_w)
        summary = asymptotics.to_dict()
        summary["ldq"] = check_ldq(report, asymptotics.lengths).to_dict()
        summary["structure"] = report.to_dict()
        return {"summary": summary}

    def _aggregation_x0(self, m):
        x0 = self.scenario.aggregation.get("x0")
        if x0 is None:
            return np.ones(m)
        return x0

    def _process_aggregate(self):
        """eps-studies against the aggregated ODEs"""
        aggregation = self.scenario.aggregation
        if not aggregation:
            raise SchemaError("Scenario has no 'aggregation' block")
        mode = self.aggregation_mode or aggregation["mode"]
        T = self.settings["t_final"]
        eps = self.eps or aggregation["eps"]

        if mode == "flow":
            model = self.scenario.model
            K = aggregation.get("K", model.K.tolist() if isinstance(model, MutationModel) else None)
            Q = aggregation.get("Q", model.Q.tolist() if isinstance(model, MutationModel) else None)
            if K is None or Q is None:
                raise SchemaError("Flow aggregation needs 'K' and 'Q'")
            m = len(K)
            x0 = self._aggregation_x0(m)
            study = flow_convergence_study(K, Q, x0, eps, T, cells=aggregation["cells"],
                                           t_min=aggregation.get("t_min", 0.0))
            ode = aggregated_flow_ode(K, Q, study_masses(x0), T, dt=self.settings["dt"])
            summary = study.to_dict()
            summary["ode_rate"] = ode.rate
            if ode.reference is not None:
                summary["ode_closed_form_deviation"] = float(np.max(np.abs(ode.states - ode.reference)))
            return {"summary": summary}

        model = self.scenario.model
        if not isinstance(model, SynapticModel):
            raise SchemaError("Diffusion aggregation needs a synaptic model")
        x0 = self._aggregation_x0(model.m)
        study = diffusion_convergence_study(
            model.graph, model.density_flux, model.aggregated_generator, x0, eps, T,
            t_min=aggregation.get("t_min", 0.5), cells=self.settings["cells"], dt=self.settings["dt"],
        )
        ode = aggregated_diffusion_ode(model.aggregated_generator, study_masses(x0), T, dt=self.settings["dt"])
        summary = study.to_dict()
        summary["ode_rate"] = ode.rate
        summary["ode_limit"] = ode.limit.tolist()
        summary["ode_final"] = ode.states[-1].tolist()
        return {"summary": summary}

    def _process_report(self):
        """Consolidated description of the scenario"""
        g = self.scenario.graph
        _, transport = self._transport_verdict()
        summary = {
            "name": self.scenario.name,
            "graph": {"vertices": g.n, "edges": g.m, "pairs": [list(e) for e in g.edges]},
            "generation": {
                "transport": transport,
                "diffusion": self._diffusion_verdict(),
            },
            "structure": analyze_structure(g, self._boundary_matrix()).to_dict(),
        }
        if self.scenario.model is not None:
            summary["model"] = self.scenario.model.to_dict()
        if self.echo_config:
            summary["config"] = self.scenario.to_dict()
        return {"summary": summary}


def study_masses(profiles):
    """Edge integrals of per-edge sample profiles on [0, 1]"""
    masses = []
    for profile in profiles:
        samples = np.asarray(profile, dtype=float)
        if samples.ndim == 0:
            masses.append(float(samples))
        else:
            masses.append(float(trapezoid(samples, np.linspace(0.0, 1.0, samples.size))))
    return np.array(masses)
