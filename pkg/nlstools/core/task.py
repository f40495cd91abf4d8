from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional

from loguru import logger

from .config import RunConfig


class RunContext:
    """
    State handed from task to task in a pipeline

    :param config: Validated run configuration
    :param out_dir: Directory receiving the artifacts of this run (None keeps results in memory)
    """

    def __init__(self, config: RunConfig, out_dir: Optional[str] = None):
        self.config = config
        self.out_dir = out_dir
        self.results: Dict[str, Any] = {}
        self.artifacts: List[str] = []

    def add_artifact(self, path: str):
        self.artifacts.append(path)
        logger.info(f"Wrote {path}")


class Task(ABC):
    """Base Task class"""

    @abstractmethod
    def run(self, context: RunContext, *args, **kwargs) -> Optional[RunContext]:
        """Run method to implement the task"""
        raise NotImplementedError

    @property
    def name(self) -> str:
        return type(self).__name__


class Pipeline:
    def __init__(self, tasks: Optional[List[Task]] = None):
        self._tasks = list(tasks) if tasks else []

    def run(self, context: RunContext, *args, **kwargs) -> RunContext:
        for task in self._tasks:
            logger.debug(f"Running {task.name}")
            context = task.run(context) or context
        return context

    def append(self, task: Task):
        """Add tasks to the pipeline"""
        self._tasks.append(task)

    def __len__(self):
        return len(self._tasks)
