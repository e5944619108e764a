"""Scripted studies: universality sweep, perturbation statistics,
auto-recalibration, phase-difference statistics and the faulty-shifter grid.

Every study is deterministic given its master seed: each unit of work
derives a private seed from (master seed, label, index), so records are
bit-identical across reruns and thread counts (``wall_time`` excepted,
which is informational only).  Functions return flat lists of
:class:`ExperimentRecord`, ready for CSV serialization, sorted by their
canonical task order rather than completion order.
"""

from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .circuit import (
    InterlacedCircuit,
    PhaseProgram,
    apply_fault_plan,
    compose,
    ideal_circuit,
    loss,
    transfer_matrix,
)
from .lattice import JxSpec, perturbed_mixer, relative_deviation
from .optimizer import FromVector, LmaOptions, RandomUniform, fit, recalibrate
from .sampling import SeedPlan, gaussian_hermitian, haar_unitary, uniform_phases

__all__ = [
    "ExperimentRecord",
    "record_key",
    "record_sort_key",
    "universality_sweep",
    "perturbation_table",
    "recalibration_histogram",
    "phase_difference_study",
    "faulty_shifter_grid",
    "summarize_universality",
    "summarize_perturbation",
]


@dataclass(frozen=True)
class ExperimentRecord:
    """One self-contained result row; rerunnable from its label, seed and indices."""

    experiment_label: str
    n: int
    m: int
    sigma_k: float
    fault_plan: str
    target_index: int
    seed: int
    loss_before: float | None
    loss_after: float | None
    delta_f: float | None
    delta_u: float | None
    mu_dx: float | None
    sigma_dx: float | None
    corr_x: float | None
    iterations: int
    free_count: int
    wall_time: float


def record_key(record: ExperimentRecord) -> tuple:
    """Identity of the unit of work that produced the record (resume key)."""
    return (
        record.experiment_label,
        record.n,
        record.m,
        repr(record.sigma_k),
        record.fault_plan,
        record.target_index,
    )


def record_sort_key(record: ExperimentRecord) -> tuple:
    return (
        record.experiment_label,
        record.n,
        record.m,
        record.sigma_k,
        record.fault_plan,
        record.target_index,
    )


def _run_indexed(task: Callable[[int], list], count: int, threads: int) -> list:
    """Run task(0..count-1), each returning a record list, in index order."""
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(task, range(count)))
    else:
        chunks = [task(i) for i in range(count)]
    out = []
    for chunk in chunks:
        out.extend(chunk)
    return out


def _skip(done: set | None, key: tuple) -> bool:
    return done is not None and key in done


def universality_sweep(
    n_list: Sequence[int],
    m_values: Sequence[int] | None,
    targets: int,
    options: LmaOptions | None,
    seed: int,
    *,
    kappa: float = 1.0,
    threads: int = 1,
    done: set | None = None,
) -> list[ExperimentRecord]:
    """Best-of-restarts loss per (N, M, Haar target).

    ``m_values=None`` sweeps M = N-1 .. N+2 for each N, which brackets
    the layer count where the error norm collapses to numerical noise.
    Targets are shared across M for a given N.
    """
    options = options if options is not None else LmaOptions()
    plan = SeedPlan(seed)
    records: list[ExperimentRecord] = []
    for n in n_list:
        m_list = [m for m in (m_values if m_values is not None else
                              [n - 1, n, n + 1, n + 2]) if m >= 1]
        circuits = {m: ideal_circuit(n, m, kappa) for m in m_list}

        def task(i: int, n=n, m_list=m_list, circuits=circuits) -> list[ExperimentRecord]:
            pending = [
                m for m in m_list
                if not _skip(done, ("universality", n, m, repr(0.0), "", i))
            ]
            if not pending:
                return []
            target = haar_unitary(n, plan.seed(f"universality/n={n}/target", i))
            out = []
            for m in pending:
                fit_seed = plan.seed(f"universality/n={n}/m={m}/fit", i)
                t0 = time.perf_counter()
                result = fit(circuits[m], target, options, RandomUniform(), fit_seed)
                out.append(
                    ExperimentRecord(
                        experiment_label="universality",
                        n=n, m=m, sigma_k=0.0, fault_plan="", target_index=i,
                        seed=fit_seed,
                        loss_before=None, loss_after=result.loss,
                        delta_f=None, delta_u=None,
                        mu_dx=None, sigma_dx=None, corr_x=None,
                        iterations=result.iterations,
                        free_count=circuits[m].program.free_count,
                        wall_time=time.perf_counter() - t0,
                    )
                )
            return out

        records.extend(_run_indexed(task, targets, threads))
    return records


def _perturbed_mixers(
    plan: SeedPlan, label: str, spec: JxSpec, slots: int, sigma_k: float
):
    mixers = []
    for slot in range(slots):
        slot_seed = plan.seed(label, slot)
        h1 = gaussian_hermitian(spec.n, slot_seed)
        mixers.append(perturbed_mixer(spec, sigma_k, h1, seed=slot_seed))
    return tuple(mixers)


def perturbation_table(
    sigma_k_list: Sequence[float],
    samples: int,
    options: LmaOptions | None,
    seed: int,
    *,
    n: int = 8,
    m: int = 9,
    kappa: float = 1.0,
    threads: int = 1,
    done: set | None = None,
) -> list[ExperimentRecord]:
    """Relative mixer error and end-to-end error under uncorrected phases.

    Per sample: fit phases against ideal mixers, then for each sigma_k
    draw fresh independent disorder in every mixing slot and record the
    first slot's relative deviation (delta_f) together with the deviation
    of the composed matrix from the target (delta_u).  The ideal-mixer
    fit is shared across sigma_k rows of the same sample.
    """
    options = options if options is not None else LmaOptions(restarts=50)
    plan = SeedPlan(seed)
    spec = JxSpec(n, kappa)
    ideal = ideal_circuit(n, m, kappa)
    f_ideal = ideal.mixers[0].matrix
    rows = [(r, float(sk)) for r, sk in enumerate(sigma_k_list)]

    def task(i: int) -> list[ExperimentRecord]:
        pending = [
            (r, sk) for r, sk in rows
            if not _skip(done, ("perturbation-table", n, m, repr(sk), "", i))
        ]
        if not pending:
            return []
        t0 = time.perf_counter()
        target_seed = plan.seed("perturbation-table/target", i)
        target = haar_unitary(n, target_seed)
        result = fit(ideal, target, options, RandomUniform(),
                     plan.seed("perturbation-table/fit", i))
        out = []
        for r, sk in pending:
            mixers = _perturbed_mixers(
                plan, f"perturbation-table/h1/row={r}/sample={i}", spec, m + 1, sk
            )
            perturbed = InterlacedCircuit(mixers, result.phases)
            u_p = compose(perturbed)
            out.append(
                ExperimentRecord(
                    experiment_label="perturbation-table",
                    n=n, m=m, sigma_k=sk, fault_plan="", target_index=i,
                    seed=target_seed,
                    loss_before=loss(u_p, target), loss_after=result.loss,
                    delta_f=relative_deviation(f_ideal, mixers[0].matrix),
                    delta_u=relative_deviation(target, u_p),
                    mu_dx=None, sigma_dx=None, corr_x=None,
                    iterations=result.iterations,
                    free_count=ideal.program.free_count,
                    wall_time=time.perf_counter() - t0,
                )
            )
        return out

    return _run_indexed(task, samples, threads)


def recalibration_histogram(
    sigma_k_list: Sequence[float],
    targets: int,
    options: LmaOptions | None,
    seed: int,
    *,
    n: int = 8,
    m: int = 9,
    attempts: int = 10,
    truncated_iterations: int = 50,
    kappa: float = 1.0,
    threads: int = 1,
    done: set | None = None,
) -> list[ExperimentRecord]:
    """Loss before/after re-optimizing phases against perturbed mixers.

    ``loss_before`` evaluates the ideal-mixer phases on the perturbed
    circuit; ``loss_after`` is the truncated-descent recalibration result
    (at most ``attempts`` fresh random initializations of at most
    ``truncated_iterations`` iterations each).
    """
    options = options if options is not None else LmaOptions(restarts=50)
    truncated = options.truncated(truncated_iterations)
    plan = SeedPlan(seed)
    spec = JxSpec(n, kappa)
    ideal = ideal_circuit(n, m, kappa)
    rows = [(r, float(sk)) for r, sk in enumerate(sigma_k_list)]

    def task(i: int) -> list[ExperimentRecord]:
        pending = [
            (r, sk) for r, sk in rows
            if not _skip(done, ("recalibration", n, m, repr(sk), "", i))
        ]
        if not pending:
            return []
        t0 = time.perf_counter()
        target_seed = plan.seed("recalibration/target", i)
        target = haar_unitary(n, target_seed)
        result = fit(ideal, target, options, RandomUniform(),
                     plan.seed("recalibration/fit", i))
        out = []
        for r, sk in pending:
            mixers = _perturbed_mixers(
                plan, f"recalibration/h1/row={r}/target={i}", spec, m + 1, sk
            )
            perturbed = InterlacedCircuit(mixers, result.phases)
            loss_before = loss(compose(perturbed), target)
            recal = recalibrate(
                perturbed, target, truncated, attempts, RandomUniform(),
                plan.seed(f"recalibration/refit/row={r}", i),
            )
            out.append(
                ExperimentRecord(
                    experiment_label="recalibration",
                    n=n, m=m, sigma_k=sk, fault_plan="", target_index=i,
                    seed=target_seed,
                    loss_before=loss_before, loss_after=recal.loss,
                    delta_f=None, delta_u=None,
                    mu_dx=None, sigma_dx=None, corr_x=None,
                    iterations=recal.iterations,
                    free_count=ideal.program.free_count,
                    wall_time=time.perf_counter() - t0,
                )
            )
        return out

    return _run_indexed(task, targets, threads)


def phase_difference_study(
    sigma_k_list: Sequence[float],
    runs: int,
    options: LmaOptions | None,
    seed: int,
    *,
    n: int = 8,
    m: int = 9,
    init_modes: Sequence[str] = ("jittered", "random"),
    jitter_fraction: float = 0.1,
    truncated_iterations: int = 50,
    targets: int = 1,
    kappa: float = 1.0,
    threads: int = 1,
    done: set | None = None,
) -> list[ExperimentRecord]:
    """Statistics of recovered-vs-given phase vectors under truncated descents.

    One target per index is built from a known uniform phase grid with
    ideal mixers.  Each run performs a single truncated descent against a
    fresh perturbed structure (ideal when sigma_k = 0), started either
    within +-``jitter_fraction`` of the given vector or fully at random,
    and records mean/std of (given - recovered) plus their Pearson
    correlation.  The difference uses raw (non-canonicalized) recovered
    phases.
    """
    options = options if options is not None else LmaOptions()
    # each run of the study is a single truncated descent
    truncated = dataclasses.replace(
        options.truncated(truncated_iterations), restarts=1
    )
    plan = SeedPlan(seed)
    spec = JxSpec(n, kappa)
    ideal = ideal_circuit(n, m, kappa)
    stack = ideal.mixer_stack()
    rows = [(r, float(sk)) for r, sk in enumerate(sigma_k_list)]
    modes = list(init_modes)
    for mode in modes:
        if mode not in ("jittered", "random"):
            raise ValueError(f"unknown init mode {mode!r}")

    records: list[ExperimentRecord] = []
    for t in range(targets):
        given = uniform_phases(m, n, plan.seed("phasediff/given", t))
        target = transfer_matrix(stack, given)
        given_flat = given.ravel()

        def task(j: int, t=t, given=given, target=target, given_flat=given_flat):
            out = []
            for mode in modes:
                label = f"phasediff/init={mode}"
                for r, sk in rows:
                    idx = t * runs + j
                    if _skip(done, (label, n, m, repr(sk), "", idx)):
                        continue
                    t0 = time.perf_counter()
                    if sk == 0.0:
                        circ = ideal
                    else:
                        circ = InterlacedCircuit(
                            _perturbed_mixers(
                                plan,
                                f"phasediff/h1/row={r}/t={t}/run={j}",
                                spec, m + 1, sk,
                            ),
                            ideal.program,
                        )
                    init = (
                        FromVector(given, jitter_fraction)
                        if mode == "jittered"
                        else RandomUniform()
                    )
                    fit_seed = plan.seed(f"phasediff/fit/{mode}/row={r}/t={t}", j)
                    result = fit(circ, target, truncated, init, fit_seed)
                    recovered = result.phases.phase_vector()
                    dx = given_flat - recovered
                    corr = float(np.corrcoef(given_flat, recovered)[0, 1])
                    out.append(
                        ExperimentRecord(
                            experiment_label=label,
                            n=n, m=m, sigma_k=sk, fault_plan="",
                            target_index=idx, seed=fit_seed,
                            loss_before=None, loss_after=result.loss,
                            delta_f=None, delta_u=None,
                            mu_dx=float(dx.mean()), sigma_dx=float(dx.std()),
                            corr_x=corr,
                            iterations=result.iterations,
                            free_count=m * n,
                            wall_time=time.perf_counter() - t0,
                        )
                    )
            return out

        records.extend(_run_indexed(task, runs, threads))
    return records


def _random_fault_plan(
    rng: np.random.Generator, layers: int, ports: int, k: int, mode: str
) -> list[tuple[int, int, float]]:
    """k frozen-shifter positions plus uniform values, per placement mode.

    ``spread`` places one fault per layer (k distinct layers), ``clustered``
    rejection-samples until some layer holds at least two, ``any`` samples
    positions uniformly without replacement.
    """
    if k > layers * ports:
        raise ValueError(f"cannot place {k} faults on a {layers}x{ports} grid")
    if mode == "spread":
        if k > layers:
            raise ValueError(f"cannot spread {k} faults over {layers} layers")
        ms = rng.choice(layers, size=k, replace=False)
        ps = rng.integers(0, ports, size=k)
        positions = list(zip(ms.tolist(), ps.tolist()))
    elif mode == "clustered":
        while True:
            flat = rng.choice(layers * ports, size=k, replace=False)
            positions = [(int(f) // ports, int(f) % ports) for f in flat]
            counts = np.bincount([mm for mm, _ in positions], minlength=layers)
            if counts.max() >= 2:
                break
    elif mode == "any":
        flat = rng.choice(layers * ports, size=k, replace=False)
        positions = [(int(f) // ports, int(f) % ports) for f in flat]
    else:
        raise ValueError(f"unknown fault placement mode {mode!r}")
    values = rng.uniform(0.0, 2.0 * np.pi, size=k)
    plan = sorted(
        ((mm, pp, float(v)) for (mm, pp), v in zip(positions, values)),
        key=lambda item: (item[0], item[1]),
    )
    return plan


def fault_plan_string(plan: Iterable[tuple[int, int, float]]) -> str:
    return json.dumps([[mm, pp, v] for mm, pp, v in plan], separators=(",", ":"))


def faulty_shifter_grid(
    k_list: Sequence[int],
    combos_per_k: int,
    targets: int,
    options: LmaOptions | None,
    seed: int,
    *,
    n: int = 4,
    m: int = 5,
    kappa: float = 1.0,
    threads: int = 1,
    done: set | None = None,
) -> list[ExperimentRecord]:
    """Best achievable loss with k shifters frozen at random values.

    For k equal to the port count, the first half of the combos places
    one fault per layer and the second half forces at least two faults
    into one layer; other k use unrestricted random placements.
    """
    options = options if options is not None else LmaOptions(restarts=24)
    plan = SeedPlan(seed)
    records: list[ExperimentRecord] = []
    for k in k_list:
        for c in range(combos_per_k):
            rng = plan.rng(f"faulty/plan/k={k}", c)
            if k == n:
                mode = "spread" if c < (combos_per_k + 1) // 2 else "clustered"
            else:
                mode = "any"
            fault_plan = _random_fault_plan(rng, m, n, k, mode)
            plan_str = fault_plan_string(fault_plan)
            label = f"faulty/k={k}/combo={c:03d}"
            program = apply_fault_plan(PhaseProgram.zeros(m, n), fault_plan)
            circuit = ideal_circuit(n, m, kappa).with_program(program)

            def task(i: int, label=label, plan_str=plan_str, circuit=circuit):
                if _skip(done, (label, n, m, repr(0.0), plan_str, i)):
                    return []
                t0 = time.perf_counter()
                target = haar_unitary(n, plan.seed(f"{label}/target", i))
                fit_seed = plan.seed(f"{label}/fit", i)
                result = fit(circuit, target, options, RandomUniform(), fit_seed)
                return [
                    ExperimentRecord(
                        experiment_label=label,
                        n=n, m=m, sigma_k=0.0, fault_plan=plan_str,
                        target_index=i, seed=fit_seed,
                        loss_before=None, loss_after=result.loss,
                        delta_f=None, delta_u=None,
                        mu_dx=None, sigma_dx=None, corr_x=None,
                        iterations=result.iterations,
                        free_count=circuit.program.free_count,
                        wall_time=time.perf_counter() - t0,
                    )
                ]

            records.extend(_run_indexed(task, targets, threads))
    return records


def summarize_universality(records: Iterable[ExperimentRecord]) -> list[dict]:
    """Median loss and converged fraction per (n, m)."""
    groups: dict[tuple[int, int], list[float]] = {}
    for rec in records:
        if rec.experiment_label != "universality" or rec.loss_after is None:
            continue
        groups.setdefault((rec.n, rec.m), []).append(rec.loss_after)
    out = []
    for (n, m), losses in sorted(groups.items()):
        arr = np.asarray(losses)
        out.append(
            {
                "n": n,
                "m": m,
                "targets": len(losses),
                "median_loss": float(np.median(arr)),
                "fraction_below_1e-10": float((arr < 1e-10).mean()),
            }
        )
    return out


def summarize_perturbation(records: Iterable[ExperimentRecord]) -> list[dict]:
    """Ensemble means of delta_f / delta_u per sigma_k, plus their ratio."""
    groups: dict[float, list[tuple[float, float]]] = {}
    for rec in records:
        if rec.experiment_label != "perturbation-table":
            continue
        if rec.delta_f is None or rec.delta_u is None:
            continue
        groups.setdefault(rec.sigma_k, []).append((rec.delta_f, rec.delta_u))
    out = []
    for sk, pairs in sorted(groups.items()):
        df = float(np.mean([p[0] for p in pairs]))
        du = float(np.mean([p[1] for p in pairs]))
        out.append(
            {
                "sigma_k": sk,
                "samples": len(pairs),
                "mean_delta_f": df,
                "mean_delta_u": du,
                "ratio": du / df if df > 0 else float("nan"),
            }
        )
    return out
