#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import asyncio
import functools
import hashlib
import json
import os
import tempfile

from headguard.logger import logger

DEFAULT_MAX_CONCURRENCY = 1
SEED_MODULUS = 2**32


def canonical_json(ob):
    """Serializes `ob` to a byte-stable JSON string (sorted keys, no spaces)."""
    return json.dumps(ob, sort_keys=True, separators=(",", ":"), allow_nan=False)


def fingerprint(ob):
    """Returns the sha256 hex digest of the canonical JSON form of `ob`."""
    return hashlib.sha256(canonical_json(ob).encode("utf8")).hexdigest()


def derive_seed(seed, *parts):
    """Derives a child seed from a global seed and any number of string-able parts.

    Used to give each example of a parallel attack its own stream, independent
    of the schedule.
    """
    digest = hashlib.md5(
        ":".join([str(seed)] + [str(part) for part in parts]).encode("utf8")
    ).hexdigest()
    return int(digest, 16) % SEED_MODULUS


def atomic_write(path, content, mode="w"):
    """Writes `content` to `path` through a temporary file + rename.

    Readers never see a half-written artifact.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, temp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        encoding = None if "b" in mode else "utf8"
        with os.fdopen(fd, mode, encoding=encoding, newline="" if encoding else None) as f:
            f.write(content)
        os.replace(temp_path, path)
    except BaseException:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise
    return path


def write_json(path, ob):
    return atomic_write(path, json.dumps(ob, sort_keys=True, indent=2) + "\n")


def read_json(path):
    with open(path, encoding="utf8") as f:
        return json.load(f)


def ensure_workdir(path):
    """Creates `path` atomically if it does not exist yet.

    The directory is built under a temporary name next to its final location
    and renamed into place, so a crashed run never leaves a half-created workdir.
    """
    if os.path.isdir(path):
        return path
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    temp_dir = tempfile.mkdtemp(prefix=".workdir-", dir=parent)
    try:
        os.rename(temp_dir, path)
    except OSError:
        # someone else created it meanwhile
        os.rmdir(temp_dir)
        if not os.path.isdir(path):
            raise
    logger.debug(f"Created workdir {path}")
    return path


class ConcurrentTasks:
    """Async task manager.

    Can be used to trigger concurrent async tasks with a maximum
    concurrency value.

    - `max_concurrency`: max concurrent tasks allowed, default: 1
    - `results_callback`: when provided, synchronous function called with the result of each task.
    """

    def __init__(self, max_concurrency=DEFAULT_MAX_CONCURRENCY, results_callback=None):
        self.max_concurrency = max_concurrency
        self.tasks = []
        self.results_callback = results_callback
        self._task_over = asyncio.Event()
        self._started = []

    def __len__(self):
        return len(self.tasks)

    def _callback(self, task, result_callback=None):
        self.tasks.remove(task)
        self._task_over.set()
        if task.cancelled() or task.exception() is not None:
            # surfaced by join()
            return
        if result_callback is not None:
            result_callback(task.result())
        # global callback
        if self.results_callback is not None:
            self.results_callback(task.result())

    async def put(self, coroutine, result_callback=None):
        """Adds a coroutine for immediate execution.

        If the number of running tasks reach `max_concurrency`, this
        function will block and wait for a free slot.

        If provided, `result_callback` will be called when the task is done.
        """
        while len(self.tasks) >= self.max_concurrency:
            await self._task_over.wait()
            # rearm
            self._task_over.clear()
        task = asyncio.create_task(coroutine())
        self.tasks.append(task)
        self._started.append(task)
        task.add_done_callback(
            functools.partial(self._callback, result_callback=result_callback)
        )
        return task

    async def join(self):
        """Wait for all tasks to finish, re-raising the first failure."""
        await asyncio.gather(*self._started)

    def cancel(self):
        """Cancels all tasks"""
        for task in self.tasks:
            task.cancel()


async def run_blocking(executor, func, *args):
    """Runs the blocking `func(*args)` in `executor` without blocking the loop."""
    loop = asyncio.get_running_loop()
    return await loop.run_in_executor(executor, functools.partial(func, *args))


def get_event_loop(uvloop=False):
    if uvloop:
        # activate uvloop if lib is present
        try:
            import uvloop

            asyncio.set_event_loop_policy(uvloop.EventLoopPolicy())
        except Exception:
            pass
    try:
        loop = asyncio.get_running_loop()
    except RuntimeError:
        loop = asyncio.new_event_loop()
        asyncio.set_event_loop(loop)
    return loop
