# -*- test-case-name: qfces.test_gateway -*-
"""
Chat-completion backends behind a single intent.

Code that needs a completion returns an Effect of :obj:`Complete`; a
:obj:`Gateway` performs it against whichever backend the request names. The
gateway measures latency, enforces a per-backend limit on requests in flight,
and is safe to share between threads.

:func:`complete` adds the retry policy on top of a single :obj:`Complete`,
and :func:`sample_n` fans a request out into ``n`` independent samples.
"""

import hashlib
import logging
import os
import threading
import time

import attr
import httpx

from effect import Constant, Delay, Effect, TypeDispatcher, parallel_all_errors, sync_performer
from effect.retry import retry

from ._errors import BackendError, ValidationError, unwrap

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 120.0
DEFAULT_MAX_FAILURE_FRACTION = 0.5


class BackendAuthError(BackendError):
    """Credentials are missing or were rejected. Never retried."""


class TransientBackendError(BackendError):
    """A timeout, a 429 or a 5xx. Retried with backoff."""


class SamplingError(BackendError):
    """Too many of the samples requested by :func:`sample_n` failed."""


class UnknownBackendError(ValidationError):
    """A request names a backend the gateway does not know."""


def _non_negative(instance, attribute, value):
    if value < 0:
        raise ValueError("%s must be >= 0, got %r" % (attribute.name, value))


def _positive_or_unset(instance, attribute, value):
    if value is not None and value < 1:
        raise ValueError("%s must be a positive integer, got %r" % (attribute.name, value))


def _top_p(instance, attribute, value):
    if value is not None and not 0 < value <= 1:
        raise ValueError("top_p must be in (0, 1], got %r" % (value,))


@attr.s(frozen=True)
class SamplingParams(object):
    """Decoding parameters. Unset optional parameters are not sent."""

    temperature = attr.ib(default=0.0, validator=_non_negative)
    top_k = attr.ib(default=None, validator=_positive_or_unset)
    top_p = attr.ib(default=None, validator=_top_p)
    num_beams = attr.ib(default=None, validator=_positive_or_unset)
    max_tokens = attr.ib(default=512, validator=_positive_or_unset)
    n_samples = attr.ib(default=1, validator=_positive_or_unset)


#: Decoding used for M-OS and comparative summary generation.
GENERATION_PRESET = SamplingParams(
    temperature=0.2, top_k=25, top_p=0.95, num_beams=3, max_tokens=1024
)
#: Decoding used for judging: many samples at a low temperature.
EVALUATION_PRESET = SamplingParams(temperature=0.2, max_tokens=256, n_samples=100)


def estimate_tokens(text):
    """Token estimate: whitespace-separated words."""
    return len(text.split())


def request_fingerprint(system_message, user_message):
    digest = hashlib.sha256()
    digest.update(system_message.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(user_message.encode("utf-8"))
    return digest.hexdigest()


def _non_empty(instance, attribute, value):
    if not value or not value.strip():
        raise ValueError("%s must not be empty" % (attribute.name,))


@attr.s(frozen=True)
class CompletionRequest(object):
    """
    :param task: The template id the prompt was rendered from, if any.
    """

    system_message = attr.ib()
    user_message = attr.ib(validator=_non_empty)
    params = attr.ib(default=SamplingParams())
    backend_id = attr.ib(default="mock")
    task = attr.ib(default=None)

    @property
    def fingerprint(self):
        return request_fingerprint(self.system_message, self.user_message)

    @property
    def input_token_estimate(self):
        return estimate_tokens(self.system_message) + estimate_tokens(self.user_message)


@attr.s(frozen=True)
class CompletionResult(object):
    """
    One completion. A failed sample has ``error`` set and empty ``text``.
    """

    text = attr.ib()
    latency_ms = attr.ib(validator=_non_negative)
    input_token_estimate = attr.ib()
    output_token_estimate = attr.ib()
    sample_index = attr.ib(default=0)
    error = attr.ib(default=None)

    @property
    def ok(self):
        return self.error is None


@attr.s(frozen=True)
class Reply(object):
    """
    What a backend returns. ``latency_ms`` is None when the gateway should
    report the wall-clock time it measured around the call.
    """

    text = attr.ib()
    latency_ms = attr.ib(default=None)


@attr.s(frozen=True)
class Complete(object):
    """An intent to obtain one completion sample for ``request``."""

    request = attr.ib()
    sample_index = attr.ib(default=0)


@attr.s(frozen=True)
class RetryPolicy(object):
    """
    Backoff delays, in seconds, one per retry after the first attempt.

    The default allows three retries, so a request is sent at most four times.
    """

    backoff = attr.ib(default=(0.5, 1.0, 2.0), converter=tuple)


DEFAULT_RETRY = RetryPolicy()
NO_RETRY = RetryPolicy(backoff=())


class HttpBackend(object):
    """
    A chat-completion endpoint spoken to over HTTP+JSON.

    :param endpoint: Full URL that accepts the POSTed request body.
    :param auth_env: Name of the environment variable holding the bearer
        token, or None for endpoints without authentication.
    :param extended_sampling: Whether the endpoint accepts ``top_k`` and
        ``num_beams``; when false those are dropped with a warning.
    :param client: An ``httpx.Client``; tests pass one with a mock transport.
    """

    def __init__(
        self,
        backend_id,
        endpoint,
        model,
        auth_env=None,
        timeout=DEFAULT_TIMEOUT,
        concurrency=4,
        extended_sampling=False,
        client=None,
    ):
        self.backend_id = backend_id
        self.endpoint = endpoint
        self.model = model
        self.auth_env = auth_env
        self.timeout = timeout
        self.concurrency = concurrency
        self.extended_sampling = extended_sampling
        self.client = client if client is not None else httpx.Client()
        self._warned = set()
        self._warn_lock = threading.Lock()

    def _token(self):
        if not self.auth_env:
            return None
        token = os.environ.get(self.auth_env, "").strip()
        if not token:
            raise BackendAuthError(
                "backend %s: environment variable %s is not set"
                % (self.backend_id, self.auth_env)
            )
        return token

    def payload(self, request):
        params = request.params
        messages = []
        if request.system_message:
            messages.append({"role": "system", "content": request.system_message})
        messages.append({"role": "user", "content": request.user_message})
        body = {
            "model": self.model,
            "messages": messages,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        if params.top_p is not None:
            body["top_p"] = params.top_p
        for name in ("top_k", "num_beams"):
            value = getattr(params, name)
            if value is None:
                continue
            if self.extended_sampling:
                body[name] = value
            else:
                self._warn_dropped(name)
        return body

    def _warn_dropped(self, name):
        with self._warn_lock:
            if name in self._warned:
                return
            self._warned.add(name)
        log.warning("backend %s does not accept %s; dropping it", self.backend_id, name)

    def call(self, request, sample_index=0):
        token = self._token()
        headers = {"Authorization": "Bearer " + token} if token else {}
        try:
            response = self.client.post(
                self.endpoint,
                json=self.payload(request),
                headers=headers,
                timeout=self.timeout,
            )
        except httpx.TimeoutException as e:
            raise TransientBackendError("backend %s: timeout (%s)" % (self.backend_id, e))
        except httpx.TransportError as e:
            raise TransientBackendError("backend %s: network error (%s)" % (self.backend_id, e))
        status = response.status_code
        if status in (401, 403):
            raise BackendAuthError("backend %s: HTTP %d" % (self.backend_id, status))
        if status == 429 or status >= 500:
            raise TransientBackendError("backend %s: HTTP %d" % (self.backend_id, status))
        if not response.is_success:
            raise BackendError("backend %s: HTTP %d" % (self.backend_id, status))
        try:
            text = response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError):
            raise BackendError("backend %s: malformed completion response" % (self.backend_id,))
        return Reply(text=text or "")

    def close(self):
        self.client.close()


class Gateway(object):
    """
    Performs :obj:`Complete` intents. Register it in a dispatcher with
    :attr:`dispatcher`.

    Each backend gets a bounded semaphore sized by its ``concurrency``
    attribute; a performer blocks on it before calling the backend.
    """

    def __init__(self, backends=()):
        self.backends = {}
        self._limits = {}
        for backend in backends:
            self.register(backend)
        self.dispatcher = TypeDispatcher({Complete: sync_performer(self.perform_complete)})

    def register(self, backend):
        self.backends[backend.backend_id] = backend
        self._limits[backend.backend_id] = threading.BoundedSemaphore(
            max(1, backend.concurrency)
        )

    def close(self):
        """Release every backend's connections."""
        for backend in self.backends.values():
            backend.close()

    def perform_complete(self, dispatcher, intent):
        request = intent.request
        backend = self.backends.get(request.backend_id)
        if backend is None:
            raise UnknownBackendError("unknown backend %r" % (request.backend_id,))
        with self._limits[request.backend_id]:
            start = time.monotonic()
            reply = backend.call(request, intent.sample_index)
            elapsed_ms = (time.monotonic() - start) * 1000.0
        latency = elapsed_ms if reply.latency_ms is None else reply.latency_ms
        return CompletionResult(
            text=reply.text,
            latency_ms=latency,
            input_token_estimate=request.input_token_estimate,
            output_token_estimate=estimate_tokens(reply.text),
            sample_index=intent.sample_index,
        )


def complete(request, sample_index=0, policy=DEFAULT_RETRY):
    """
    Return an Effect of a :obj:`CompletionResult` for ``request``.

    :obj:`TransientBackendError` failures are retried after each delay in
    ``policy.backoff``; anything else fails immediately.
    """
    delays = iter(policy.backoff)

    def should_retry(error):
        if not isinstance(error, TransientBackendError):
            return Effect(Constant(False))
        delay = next(delays, None)
        if delay is None:
            return Effect(Constant(False))
        log.info("retrying %s in %ss: %s", request.backend_id, delay, error)
        return Effect(Delay(delay)).on(success=lambda _: True)

    return retry(Effect(Complete(request=request, sample_index=sample_index)), should_retry)


def sample_n(
    request, n, max_failure_fraction=DEFAULT_MAX_FAILURE_FRACTION, policy=DEFAULT_RETRY
):
    """
    Return an Effect of exactly ``n`` :obj:`CompletionResult`, ordered by
    sample index. The samples run in parallel; failed samples are kept as
    results with ``error`` set.

    :raises SamplingError: (through the Effect) when more than
        ``max_failure_fraction`` of the samples failed. An authentication
        failure is re-raised as is.
    """
    if n < 1:
        raise ValueError("n must be >= 1, got %r" % (n,))

    def collect(outcomes):
        results = []
        for index, (is_error, value) in enumerate(outcomes):
            if not is_error:
                results.append(value)
                continue
            error = unwrap(value)
            if isinstance(error, BackendAuthError):
                raise error
            results.append(
                CompletionResult(
                    text="",
                    latency_ms=0.0,
                    input_token_estimate=request.input_token_estimate,
                    output_token_estimate=0,
                    sample_index=index,
                    error="%s: %s" % (type(error).__name__, error),
                )
            )
        failed = [r for r in results if not r.ok]
        if len(failed) > max_failure_fraction * n:
            raise SamplingError(
                "%d of %d samples from %s failed; first: %s"
                % (len(failed), n, request.backend_id, failed[0].error)
            )
        return results

    effects = [complete(request, i, policy) for i in range(n)]
    return parallel_all_errors(effects).on(success=collect)
