"""Error reporting and tracing for CLI runs."""

import os
from collections.abc import Iterator
from contextlib import contextmanager, nullcontext
from typing import Any

from .logger import get_logger

logger = get_logger(__name__)

SERVICE_NAME = "epipolar-mvd"

# span attribute values must be primitives
_SPAN_TYPES = (bool, int, float, str)


def setup_sentry(
    dsn: str | None = None,
    environment: str | None = None,
    release: str | None = None,
) -> bool:
    """
    Initialise Sentry error reporting.

    Args:
        dsn: Sentry DSN (defaults to SENTRY_DSN env var)
        environment: Deployment tag (defaults to SENTRY_ENVIRONMENT, then "local")
        release: Release tag, usually the package version

    Returns:
        True when Sentry was initialised
    """
    dsn = dsn or os.getenv("SENTRY_DSN")
    if not dsn:
        logger.debug("SENTRY_DSN not set, error reporting disabled")
        return False

    try:
        import sentry_sdk

        sentry_sdk.init(
            dsn=dsn,
            environment=environment or os.getenv("SENTRY_ENVIRONMENT", "local"),
            release=release,
            traces_sample_rate=0.0,
            send_default_pii=False,
        )
        sentry_sdk.set_tag("service", SERVICE_NAME)
        logger.info("Sentry error reporting enabled")
        return True
    except Exception as e:
        logger.error(f"Failed to initialise Sentry: {e}")
        return False


def setup_opentelemetry(otlp_endpoint: str | None = None) -> bool:
    """
    Install a tracer provider that exports command spans over OTLP.

    Args:
        otlp_endpoint: Collector URL (defaults to OTEL_EXPORTER_OTLP_ENDPOINT env var)

    Returns:
        True when the provider was installed
    """
    otlp_endpoint = otlp_endpoint or os.getenv("OTEL_EXPORTER_OTLP_ENDPOINT")
    if not otlp_endpoint:
        logger.debug("OTEL_EXPORTER_OTLP_ENDPOINT not set, tracing disabled")
        return False

    try:
        from opentelemetry import trace
        from opentelemetry.sdk.resources import Resource
        from opentelemetry.sdk.trace import TracerProvider
        from opentelemetry.sdk.trace.export import BatchSpanProcessor
    except ImportError:
        logger.warning("opentelemetry-sdk not installed, tracing disabled")
        return False

    try:
        # grpc exporter ships separately from the sdk
        from opentelemetry.exporter.otlp.proto.grpc.trace_exporter import OTLPSpanExporter
    except ImportError:
        logger.warning("OTLP exporter not installed, tracing disabled")
        return False

    provider = TracerProvider(resource=Resource.create({"service.name": SERVICE_NAME}))
    provider.add_span_processor(
        BatchSpanProcessor(OTLPSpanExporter(endpoint=otlp_endpoint, insecure=True))
    )
    trace.set_tracer_provider(provider)
    logger.info(f"Tracing enabled, exporting to {otlp_endpoint}")
    return True


class _NoOpTracer:
    def start_as_current_span(self, name, **kwargs):
        return nullcontext()


def get_tracer(name: str = __name__):
    """Tracer for ``name``; a no-op tracer when OpenTelemetry is unavailable."""
    try:
        from opentelemetry import trace

        return trace.get_tracer(name)
    except ImportError:
        return _NoOpTracer()


def span_attributes(values: dict[str, Any], prefix: str = "epipolar") -> dict[str, Any]:
    """Flatten run parameters into span attributes, dropping unset and non-scalar values."""
    attributes = {}
    for key, value in values.items():
        if value is None:
            continue
        if not isinstance(value, _SPAN_TYPES):
            value = str(value)
        attributes[f"{prefix}.{key}"] = value
    return attributes


@contextmanager
def command_span(command: str, attributes: dict[str, Any] | None = None) -> Iterator[Any]:
    """
    Trace one CLI command.

    The span is named ``cli.<command>`` and carries ``attributes`` through
    :func:`span_attributes`. Exceptions are recorded on the span and re-raised.
    """
    tracer = get_tracer("epipolar_mvd.cli")
    with tracer.start_as_current_span(f"cli.{command}") as span:
        if span is not None:
            span.set_attributes(span_attributes(attributes or {}))
        try:
            yield span
        except Exception as e:
            if span is not None:
                span.record_exception(e)
            raise


def capture_exception(error: Exception, context: dict | None = None) -> None:
    """
    Log an unexpected error and forward it to Sentry when reporting is enabled.

    Args:
        error: The exception
        context: Named context blocks, e.g. ``{"cli": {"command": "check", "seed": 0}}``
    """
    logger.error(f"Unexpected error: {error}", exc_info=error)
    try:
        import sentry_sdk
    except ImportError:
        return

    with sentry_sdk.push_scope() as scope:
        for name, values in (context or {}).items():
            scope.set_context(name, values)
            if "command" in values:
                scope.set_tag("command", values["command"])
        sentry_sdk.capture_exception(error)
