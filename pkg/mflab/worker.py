import logging
from logging.handlers import QueueHandler
from queue import Queue

import numpy as np

from .car import build_fock_context
from .experiment import LatticeBlock, build_model
from .interactions import DecayFunction
from .longrange import pressure_lr
from .thermogame import conservative_set, constant_starts, gap_fixed_point
from .utils import derive_seed


def evaluate_cell(job: dict, logger: logging.Logger = None) -> dict:
    """Solve one sweep cell: gap equations, min-max value and the direct long-range pressure.

    Args:
        job (dict): Cell ``index``, ``beta``, ``scale``, ``half_width`` together with the
            ``model`` document, ``lattice`` and ``decay`` blocks, ``solver`` settings and master ``seed``.
        logger (logging.Logger): Logger for progress messages.

    Returns:
        dict: One table row.
    """
    logger = logger or logging.getLogger(__name__)
    lattice = LatticeBlock(job["lattice"]["dimension"], (job["half_width"],), tuple(job["lattice"]["spins"]))
    decay = DecayFunction(job["decay"]["varsigma"], job["decay"]["epsilon"], lattice.dimension)
    model = build_model(job["model"], lattice, decay)
    if job["scale"] != 1.0:
        model = model.with_weights(job["scale"])
    ctx = build_fock_context(lattice.dimension, job["half_width"], lattice.spins)
    beta = job["beta"]
    seed = derive_seed(job["seed"], "sweep", job["index"])

    solutions = gap_fixed_point(model, beta, ctx, job["solver"]["restarts"], job["solver"]["damping"],
                                job["solver"]["tolerance"], job["solver"]["max_iterations"], seed,
                                extra_starts=constant_starts(model))
    reference = pressure_lr(model, beta, ctx)
    row = {
        "index": job["index"],
        "beta": beta,
        "scale": job["scale"],
        "half_width": job["half_width"],
        "pressure_lr": reference,
        "solutions": len(solutions),
    }
    if model.terms:
        strategies = conservative_set(model, beta, ctx, job["solver"]["restarts"], seed, solutions=solutions)
        row["minmax"] = strategies.pressure
        row["minmax_residual"] = abs(strategies.pressure - reference)
    else:
        row["minmax"] = solutions[0].pressure
        row["minmax_residual"] = abs(solutions[0].pressure - reference)
    best = solutions[0] if solutions else None
    row["branch"] = best.branch if best else "none"
    for k in range(model.size):
        row[f"gap_{k}"] = float(np.abs(best.gap.c[k])) if best else float("nan")
    logger.info(f"Cell {job['index']} (beta={beta}, scale={job['scale']}, L={job['half_width']}): "
                f"pressure {reference:.10f}, branch {row['branch']}")
    return row


def sweep_worker(worker_id: int, work_queue: Queue, results_queue: Queue, log_queue: Queue) -> None:
    """Retrieve sweep cells from the queue and evaluate them

    Args:
        worker_id (int): ID of the worker for logging.
        work_queue (Queue): Queue containing cells.
        results_queue (Queue): Queue to use for reporting rows.
        log_queue (Queue): Queue to use for logging.
    """
    queue_handler = QueueHandler(log_queue)
    logger = logging.getLogger(f"worker-{worker_id}")
    logger.propagate = False
    logger.addHandler(queue_handler)
    logger.setLevel(logging.DEBUG)
    logger.debug(f"Worker {worker_id} started")

    while True:
        job = work_queue.get()
        if job is None:
            logger.info(f"Worker {worker_id} received None, stopping...")
            work_queue.task_done()
            break
        try:
            results_queue.put({"status": "done", "row": evaluate_cell(job, logger)})
        except Exception as e:
            logger.error(f"Worker {worker_id} failed on cell {job['index']}: {e}")
            results_queue.put({"status": "failed", "index": job["index"], "error": getattr(e, "code", "mflab-error"),
                               "message": str(e)})
        work_queue.task_done()
