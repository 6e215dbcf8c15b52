from pydantic_settings import (
    BaseSettings,
    JsonConfigSettingsSource,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
)


class Settings(BaseSettings):
    model_config = SettingsConfigDict(json_file="lusin_settings.json", json_file_encoding="utf-8")

    app_name: str = "Lusin Toolkit"
    log_level: str = "WARNING"

    seed: int = 7
    samples: int = 1000
    tolerance: float = 1e-2
    epsilons: list[float] = [0.5, 0.1, 0.02]
    depth: int = 4

    axiom_tolerance: float = 1e-9
    lipschitz_slack: float = 1e-12
    axiom_triples: int = 10_000
    axiom_exhaustive_limit: int = 200

    escape_factor: float = 1.5
    escape_steps: int = 64
    escape_min_hits: int = 3
    proper_bound: float = 1e4

    cauchy_window: int = 20
    cauchy_tolerance: float = 1e-3
    sequence_length: int = 10_000
    certificate_sequences: int = 50
    certificate_length: int = 10_000

    record_wall_time: bool = False
    archive_url: str = ""

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        # no environment input: constructor arguments, then the optional JSON file
        return (init_settings, JsonConfigSettingsSource(settings_cls))


settings = Settings()
