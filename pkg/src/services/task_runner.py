import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, List, TypeVar, Union

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV_VARIABLE = "QKERN_THREADS"


class TaskRunner:
    """
    Scheduling of independent tasks and atomic writing of result files. Results never depend on the worker count:
    every task gets its own inputs (and its own RNG stream) and outputs are collected in submission order.
    """

    @staticmethod
    def worker_count() -> int:
        """
        Worker cap from QKERN_THREADS; 0 or unset means one worker per CPU.
        :return:
        """
        raw = os.environ.get(THREADS_ENV_VARIABLE, "0").strip() or "0"
        try:
            requested = int(raw)
        except ValueError:
            logger.warning("Ignoring non-integer %s=%r", THREADS_ENV_VARIABLE, raw)
            requested = 0
        if requested <= 0:
            return os.cpu_count() or 1
        return requested

    @staticmethod
    def map_ordered(function: Callable[[T], R], tasks: Iterable[T]) -> List[R]:
        tasks = list(tasks)
        workers = min(TaskRunner.worker_count(), max(len(tasks), 1))
        if workers <= 1:
            return [function(task) for task in tasks]
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(function, tasks))

    @staticmethod
    def write_atomically(path: Union[str, Path], content: Union[str, bytes]) -> Path:
        """
        Writes to a temporary file next to the target and renames it into place.
        :param path: destination file.
        :param content: text or bytes.
        :return:
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        mode = "wb" if isinstance(content, bytes) else "w"
        handle, temporary = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(handle, mode) as file:
                file.write(content)
            os.replace(temporary, path)
        except BaseException:
            if os.path.exists(temporary):
                os.remove(temporary)
            raise
        logger.debug("Wrote %s", path)
        return path
