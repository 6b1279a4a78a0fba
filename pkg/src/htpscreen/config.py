"""Configuration loading and application wiring.

One JSON config file describes providers, paths, sampling, retry, and the
classification rule; secrets stay in environment variables named by the
config. Mock mode swaps in the scripted provider and a virtual clock so whole
pipeline runs are offline and reproducible.
"""

from __future__ import annotations

import json
import os
import random
import secrets
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .clocks import Clock, RealClock, SimulatedClock
from .gateway import (
    DEFAULT_CONCURRENT_CAP,
    HttpProvider,
    MockProvider,
    ModelGateway,
    ModelRole,
    Provider,
    ProviderEndpoint,
    RetryPolicy,
    SamplingParams,
    load_mock_script,
    load_refusal_patterns,
)
from .orchestrator import Orchestrator
from .prompts import DEFAULT_LOCALE
from .storage import Store
from .synthesis import ClassificationRule, SuggestionMode
from .taxonomy import Taxonomy, load_default_taxonomy, load_taxonomy

DEFAULT_ANON_KEY_ENV = "HTPSCREEN_ANON_KEY"
DEFAULT_PAGE_SIZE = 50
DEFAULT_BATCH_CONCURRENCY = 4


class ConfigError(Exception):
    pass


@dataclass
class ProviderSettings:
    base_url: str = ""
    model_name: str = ""
    credential_env: str = ""
    timeout_s: float = 60.0


@dataclass
class AppConfig:
    store_path: Path = Path("htpscreen-store/store.db")
    taxonomy_path: Optional[Path] = None
    prompts_dir: Optional[Path] = None
    locale: str = DEFAULT_LOCALE
    provider_mode: str = "mock"  # "live" or "mock"
    mock_script: Optional[Path] = None
    seed: Optional[int] = None
    providers: dict = field(default_factory=dict)  # role value -> ProviderSettings
    sampling: SamplingParams = SamplingParams()
    retry: RetryPolicy = RetryPolicy()
    rule: ClassificationRule = ClassificationRule()
    concurrent_cap: int = DEFAULT_CONCURRENT_CAP
    batch_concurrency: int = DEFAULT_BATCH_CONCURRENCY
    trace_log: Optional[Path] = None
    refusal_patterns_path: Optional[Path] = None
    api_token: str = ""
    cors_origin: str = "*"
    page_size: int = DEFAULT_PAGE_SIZE
    anon_key_env: str = DEFAULT_ANON_KEY_ENV
    interpretation_cap: int = 2000

    @classmethod
    def load(cls, path: Optional[Path]) -> "AppConfig":
        if path is None:
            return cls()
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc.msg}") from exc
        return cls.from_dict(raw, base_dir=Path(path).parent)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path = Path(".")) -> "AppConfig":
        def resolve(value) -> Optional[Path]:
            if value is None:
                return None
            p = Path(value)
            return p if p.is_absolute() else base_dir / p

        config = cls()
        if "store_path" in raw:
            config.store_path = resolve(raw["store_path"])
        config.taxonomy_path = resolve(raw.get("taxonomy_path"))
        config.prompts_dir = resolve(raw.get("prompts_dir"))
        config.locale = raw.get("locale", config.locale)
        config.provider_mode = raw.get("provider_mode", config.provider_mode)
        config.mock_script = resolve(raw.get("mock_script"))
        config.seed = raw.get("seed")
        for role, settings in raw.get("providers", {}).items():
            config.providers[role] = ProviderSettings(
                base_url=settings.get("base_url", ""),
                model_name=settings.get("model_name", ""),
                credential_env=settings.get("credential_env", ""),
                timeout_s=float(settings.get("timeout_s", 60.0)),
            )
        sampling = raw.get("sampling", {})
        config.sampling = SamplingParams(
            temperature=sampling.get("temperature", SamplingParams().temperature),
            top_p=sampling.get("top_p", SamplingParams().top_p),
            max_output_tokens=sampling.get("max_output_tokens", SamplingParams().max_output_tokens),
        )
        retry = raw.get("retry", {})
        config.retry = RetryPolicy(
            max_attempts=retry.get("max_attempts", RetryPolicy().max_attempts),
            base_delay=retry.get("base_delay_s", RetryPolicy().base_delay),
            backoff_factor=retry.get("backoff_factor", RetryPolicy().backoff_factor),
            jitter_fraction=retry.get("jitter_fraction", RetryPolicy().jitter_fraction),
        )
        rule = raw.get("classification", {})
        config.rule = ClassificationRule(
            severe_short_circuit=rule.get("severe_short_circuit", True),
            negative_factor_threshold=rule.get("negative_factor_threshold", 4),
            model_suggestion_mode=SuggestionMode(rule.get("model_suggestion_mode", "conservative_or")),
        )
        gateway = raw.get("gateway", {})
        config.concurrent_cap = int(gateway.get("concurrent_cap", DEFAULT_CONCURRENT_CAP))
        config.batch_concurrency = int(gateway.get("batch_concurrency", DEFAULT_BATCH_CONCURRENCY))
        config.trace_log = resolve(gateway.get("trace_log"))
        config.refusal_patterns_path = resolve(gateway.get("refusal_patterns"))
        api = raw.get("api", {})
        config.api_token = api.get("token", "")
        config.cors_origin = api.get("cors_origin", "*")
        config.page_size = int(api.get("page_size", DEFAULT_PAGE_SIZE))
        config.anon_key_env = raw.get("anonymization", {}).get("key_env", DEFAULT_ANON_KEY_ENV)
        config.interpretation_cap = int(raw.get("interpretation_cap", 2000))
        if config.provider_mode not in ("live", "mock"):
            raise ConfigError(f"provider_mode must be 'live' or 'mock', got {config.provider_mode!r}")
        if config.provider_mode == "mock" and config.mock_script is None:
            raise ConfigError("mock provider mode requires a mock_script path")
        return config

    def validate_live_credentials(self) -> None:
        for role in (ModelRole.MULTIMODAL_ANALYST, ModelRole.TEXT_EXPERT):
            settings = self.providers.get(role.value)
            if settings is None or not settings.base_url or not settings.model_name:
                raise ConfigError(f"live mode requires provider config for {role.value}")
            if settings.credential_env and not os.environ.get(settings.credential_env):
                raise ConfigError(
                    f"provider credential missing: env var {settings.credential_env} is unset"
                )


class Application:
    """Fully wired pipeline: store, taxonomy, gateway, orchestrator."""

    def __init__(self, config: AppConfig, clock: Clock, rng: random.Random,
                 store: Store, taxonomy: Taxonomy, gateway: ModelGateway,
                 orchestrator: Orchestrator, anon_key: bytes):
        self.config = config
        self.clock = clock
        self.rng = rng
        self.store = store
        self.taxonomy = taxonomy
        self.gateway = gateway
        self.orchestrator = orchestrator
        self.anon_key = anon_key

    @classmethod
    def build(cls, config: AppConfig) -> "Application":
        if config.provider_mode == "mock":
            clock: Clock = SimulatedClock()
            seed = config.seed if config.seed is not None else 0
        else:
            config.validate_live_credentials()
            clock = RealClock()
            seed = config.seed
        rng = random.Random(seed) if seed is not None else random.Random()

        taxonomy = (
            load_taxonomy(config.taxonomy_path)
            if config.taxonomy_path is not None
            else load_default_taxonomy()
        )

        providers: dict[ModelRole, Provider] = {}
        if config.provider_mode == "mock":
            script, mode = load_mock_script(config.mock_script)
            mock = MockProvider(script, seed=seed or 0, mode=mode, clock=clock)
            providers = {role: mock for role in ModelRole}
        else:
            for role in ModelRole:
                settings = config.providers[role.value]
                providers[role] = HttpProvider(
                    ProviderEndpoint(
                        base_url=settings.base_url,
                        model_name=settings.model_name,
                        api_key=os.environ.get(settings.credential_env, "")
                        if settings.credential_env
                        else "",
                        timeout_s=settings.timeout_s,
                    )
                )

        patterns = (
            load_refusal_patterns(config.refusal_patterns_path)
            if config.refusal_patterns_path is not None
            else load_refusal_patterns()
        )
        gateway = ModelGateway(
            providers=providers,
            clock=clock,
            policy=config.retry,
            refusal_patterns=patterns,
            trace_path=config.trace_log,
            rng=rng,
            concurrent_cap=config.concurrent_cap,
        )
        store = Store(config.store_path, clock=clock)
        orchestrator = Orchestrator(
            store=store,
            taxonomy=taxonomy,
            gateway=gateway,
            rule=config.rule,
            clock=clock,
            rng=rng,
            prompts_dir=config.prompts_dir,
            locale=config.locale,
            interpretation_cap=config.interpretation_cap,
            sampling=config.sampling,
        )
        anon_key = cls._anon_key(config, rng)
        return cls(config, clock, rng, store, taxonomy, gateway, orchestrator, anon_key)

    @staticmethod
    def _anon_key(config: AppConfig, rng: random.Random) -> bytes:
        value = os.environ.get(config.anon_key_env)
        if value:
            return value.encode("utf-8")
        if config.provider_mode == "mock" and config.seed is not None:
            # reproducible runs need a reproducible key; real deployments set the env var
            return bytes(rng.randrange(256) for _ in range(32))
        return secrets.token_bytes(32)

    def close(self) -> None:
        self.store.close()
