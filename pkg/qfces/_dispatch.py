"""Assembly of the dispatcher that performs every intent the pipeline emits."""

from functools import partial
from multiprocessing.pool import ThreadPool

from effect import (
    ComposedDispatcher,
    Delay,
    ParallelEffects,
    TypeDispatcher,
    base_dispatcher,
    perform_delay_with_sleep,
)
from effect.threads import perform_parallel_with_pool

from .io import file_dispatcher


def make_dispatcher(gateway, pool):
    """
    A dispatcher for completions (through ``gateway``), files and console
    output, retry delays, and parallel effects (run on the thread ``pool``).
    """
    return ComposedDispatcher(
        [
            gateway.dispatcher,
            file_dispatcher,
            TypeDispatcher(
                {
                    ParallelEffects: partial(perform_parallel_with_pool, pool),
                    Delay: perform_delay_with_sleep,
                }
            ),
            base_dispatcher,
        ]
    )


def make_pool(workers):
    return ThreadPool(workers)
