import argparse
import logging
import os
import threading
from logging.handlers import QueueHandler
from multiprocessing import Queue
from typing import Optional, Sequence

from .config import OUTPUT_PATH, WORKERS
from .exceptions import ConfigInvalid
from .experiment import COMMANDS, load_config
from .runner import execute
from .serializer import write_report


def logging_thread(log_queue: Queue, logfile: str, verbose: bool = False) -> None:
    """Thread that handles logging

    Args:
        log_queue (Queue): Queue containing log records.
        logfile (str): Path of the DEBUG log file.
        verbose (bool): Echo DEBUG records to the console as well.
    """
    logger = logging.getLogger()
    logger.setLevel(logging.DEBUG)

    fhandler = logging.FileHandler(logfile)
    fhandler.setLevel(logging.DEBUG)
    shandler = logging.StreamHandler()
    shandler.setLevel(logging.DEBUG if verbose else logging.INFO)

    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    fhandler.setFormatter(formatter)
    shandler.setFormatter(formatter)

    logger.addHandler(fhandler)
    logger.addHandler(shandler)

    while True:
        log = log_queue.get()
        if log is None:
            break
        logger.handle(log)

    logger.removeHandler(fhandler)
    logger.removeHandler(shandler)
    fhandler.close()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mflab", description="Finite-volume mean-field lattice fermion lab")
    parser.add_argument("command", choices=COMMANDS, help="Pipeline to run")
    parser.add_argument("--config", required=True, help="YAML experiment config")
    parser.add_argument("--out", default=None, help=f"Output directory (default: run.out or {OUTPUT_PATH})")
    parser.add_argument("--seed", type=int, default=None, help="Master seed, overrides the config")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a config field, e.g. thermo.betas=[1,2]")
    parser.add_argument('-v', "--verbose", action="store_true", help="Increase output verbosity")
    parser.add_argument('-w', "--workers", type=int, default=None, help=f"Override sweep worker count ({WORKERS})")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.workers:
        overrides.append(f"sweep.workers={args.workers}")

    try:
        config = load_config(args.config, args.command, overrides, args.seed, args.out)
    except ConfigInvalid as e:
        out = args.out or OUTPUT_PATH
        os.makedirs(out, exist_ok=True)
        write_report(os.path.join(out, "report.json"), {
            "command": args.command,
            "passed": False,
            "error": {"code": e.code, "field": e.field, "message": e.message},
        })
        print(f"mflab: invalid config: {e}")
        return e.exit_status

    os.makedirs(config.out, exist_ok=True)
    log_queue = Queue()
    log_thread = threading.Thread(target=logging_thread,
                                  args=(log_queue, os.path.join(config.out, "mflab.log"), args.verbose))
    log_thread.start()

    # Library modules log under their module names; route the package through the queue
    queue_handler = QueueHandler(log_queue)
    package_logger = logging.getLogger("mflab")
    package_logger.addHandler(queue_handler)
    package_logger.setLevel(logging.DEBUG)
    package_logger.propagate = False
    logger = logging.getLogger("mflab.main")
    logger.info(f"Called with arguments: {args}")

    try:
        status = execute(config, log_queue)
        logger.info(f"{config.command} finished with exit status {status}")
    finally:
        log_queue.put(None)
        log_thread.join()
        package_logger.removeHandler(queue_handler)
        package_logger.propagate = True
    return status
