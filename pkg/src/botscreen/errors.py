"""Exception types shared across the toolkit."""


class BotscreenError(Exception):
    """Base class for all toolkit errors."""


class DataError(BotscreenError):
    """Malformed input data, schema violations, or contract breaches."""


class ProviderError(BotscreenError):
    """Score-provider configuration or protocol failures."""
