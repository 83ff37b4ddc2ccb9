import io
import os
import sys
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import pandas as pd

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

LOG_FORMAT = "[%(levelname)s] %(asctime)s - %(message)s"


def get_setting(key: str, default: Optional[str] = None) -> Optional[str]:
    # st.secrets alleen als er al een Streamlit-app draait; CLI en workers lezen env
    if "streamlit" in sys.modules:
        try:
            import streamlit as st
            return st.secrets.get(key, os.getenv(key, default))  # type: ignore[attr-defined]
        except Exception:
            pass
    return os.getenv(key, default)


LOG_LEVEL = str(get_setting("OFFGRID_LOG_LEVEL", "INFO")).upper()


def get_logger(name: str) -> logging.Logger:
    logger = logging.getLogger(f"offgrid.{name}")
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)
    logger.setLevel(getattr(logging, LOG_LEVEL, logging.INFO))
    return logger


logger = get_logger("utils")


# -------------------- Errors --------------------
class OffgridError(RuntimeError):
    exit_code = 1


class PreconditionError(OffgridError, ValueError):
    exit_code = 2


class DomainError(PreconditionError):
    pass


class CertificateInfeasibleError(PreconditionError):
    pass


class ZeroFeatureError(OffgridError):
    pass


class DegenerateMetricError(OffgridError):
    pass


class QuadratureError(OffgridError):
    pass


class ConditioningError(OffgridError):
    def __init__(self, message: str, estimate: float):
        super().__init__(f"{message} (‖I−Γ_SC‖ ≈ {estimate:.4g})")
        self.estimate = float(estimate)


# -------------------- Config --------------------
def load_config(path: Union[str, Path]) -> Dict[str, Any]:
    p = Path(path)
    if not p.is_file():
        raise PreconditionError(f"Config niet gevonden: {str(p)!r}")
    with p.open("rb") as fh:
        try:
            cfg = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise PreconditionError(f"Config {str(p)!r} is geen geldige TOML: {e}") from e
    logger.info("Config: %s", config_preview(cfg))
    return cfg


def flatten_config(cfg: Dict[str, Any], prefix: str = "") -> List[Tuple[str, str]]:
    flat: List[Tuple[str, str]] = []
    for k, v in cfg.items():
        if v is None:
            continue
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.extend(flatten_config(v, prefix=f"{key}."))
        elif isinstance(v, (list, tuple)):
            for item in v:
                if item is None:
                    continue
                flat.append((key, str(item)))
        else:
            flat.append((key, str(v)))
    return flat


def config_preview(cfg: Dict[str, Any], limit: int = 12) -> str:
    pairs = flatten_config(cfg)
    preview = "&".join([f"{k}={v}" for k, v in pairs[:limit]])
    if len(pairs) > limit:
        preview += f"&...({len(pairs) - limit} more)"
    return preview


def get_threads(cli_value: Optional[int] = None) -> int:
    if cli_value is not None:
        return max(1, int(cli_value))
    try:
        return max(1, int(get_setting("OFFGRID_THREADS", "1") or 1))
    except ValueError:
        logger.info("OFFGRID_THREADS ongeldig, val terug op 1.")
        return 1


# -------------------- CSV --------------------
CSV_FLOAT_FORMAT = "%.12g"


def frame_to_csv(df: pd.DataFrame, path: Optional[Union[str, Path]] = None) -> str:
    """Schrijft een DataFrame als UTF-8 CSV met vaste float-opmaak; geeft de tekst terug."""
    buf = io.StringIO()
    df.to_csv(buf, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    text = buf.getvalue()
    if path is not None:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        logger.info("CSV geschreven: %s (%d rijen)", p, len(df))
    return text


def read_csv(path: Union[str, Path]) -> pd.DataFrame:
    p = Path(path)
    if not p.is_file():
        raise PreconditionError(f"CSV niet gevonden: {str(p)!r}")
    return pd.read_csv(p)


def rows_to_df(rows: List[Dict[str, Any]], sort_by: Optional[List[str]] = None) -> pd.DataFrame:
    df = pd.DataFrame(rows)
    if not df.empty and sort_by:
        df = df.sort_values(sort_by, kind="mergesort").reset_index(drop=True)
    return df
