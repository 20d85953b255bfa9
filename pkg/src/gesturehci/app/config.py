"""Flat ``key = value`` pipeline configuration.

Blank lines and lines starting with ``#`` are ignored. Unknown keys are an
error so that typos do not silently fall back to defaults. Example::

    # skin chroma box (inclusive)
    skin.cb_min = 77
    skin.cb_max = 127
    trigger.multiplier = 1.5
    model.cascade = models/face.cascade
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

from ..segmentation import SegmentConfig
from ..tracking import TrackConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    segment: SegmentConfig = field(default_factory=SegmentConfig)
    track: TrackConfig = field(default_factory=TrackConfig)
    trigger_multiplier: float = 1.5
    cooldown: int = 15
    vote_window: int = 3
    vote_min: int = 2
    max_face_misses: int = 5
    scale_factor: float = 1.25
    stride: int = 2
    cascade_path: str | None = None
    moe_path: str | None = None
    faces_path: str | None = None
    seed: int = 0


# key -> (section, attribute, tuple index or None, type); section None = PipelineConfig
_KEYS = {
    "skin.cb_min": ("rule", "cb", 0, int),
    "skin.cb_max": ("rule", "cb", 1, int),
    "skin.cr_min": ("rule", "cr", 0, int),
    "skin.cr_max": ("rule", "cr", 1, int),
    "skin.y_min": ("rule", "y_min", None, int),
    "morph.erode_radius": ("segment", "erode_radius", None, int),
    "morph.dilate_radius": ("segment", "dilate_radius", None, int),
    "segment.min_area_frac": ("segment", "min_area_frac", None, float),
    "pf.particles": ("track", "n_particles", None, int),
    "pf.sigma_motion": ("track", "sigma_motion", None, float),
    "pf.lambda": ("track", "lam", None, float),
    "pf.min_similarity": ("track", "min_similarity", None, float),
    "pf.bins": ("track", "bins", None, int),
    "trigger.multiplier": (None, "trigger_multiplier", None, float),
    "pipeline.cooldown": (None, "cooldown", None, int),
    "pipeline.vote_window": (None, "vote_window", None, int),
    "pipeline.vote_min": (None, "vote_min", None, int),
    "pipeline.max_face_misses": (None, "max_face_misses", None, int),
    "detect.scale_factor": (None, "scale_factor", None, float),
    "detect.stride": (None, "stride", None, int),
    "model.cascade": (None, "cascade_path", None, str),
    "model.moe": (None, "moe_path", None, str),
    "model.faces": (None, "faces_path", None, str),
    "seed": (None, "seed", None, int),
}
KEYS = tuple(_KEYS)


def parse_config(text: str, base: PipelineConfig = PipelineConfig(), origin: str = "<config>", root: str | None = None) -> PipelineConfig:
    """Apply ``key = value`` lines on top of ``base``.

    Relative model paths are resolved against ``root`` when given.
    """
    rule = base.segment.rule
    seg = base.segment
    track = base.track
    top = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{origin}:{n}: unknown key {key!r}")
        section, attr, idx, typ = _KEYS[key]
        try:
            v = typ(value)
        except ValueError:
            raise ConfigError(f"{origin}:{n}: bad value {value!r} for {key}") from None
        if typ is str and root is not None and not os.path.isabs(v):
            v = os.path.join(root, v)
        try:
            if section == "rule":
                if idx is None:
                    rule = replace(rule, **{attr: v})
                else:
                    pair = list(getattr(rule, attr))
                    pair[idx] = v
                    rule = replace(rule, **{attr: tuple(pair)})
            elif section == "segment":
                seg = replace(seg, **{attr: v})
            elif section == "track":
                track = replace(track, **{attr: v})
            else:
                top[attr] = v
        except ValueError as e:
            raise ConfigError(f"{origin}:{n}: {e}") from None
    return replace(base, segment=replace(seg, rule=rule), track=track, **top)


def load_config(path: str | os.PathLike, base: PipelineConfig = PipelineConfig()) -> PipelineConfig:
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, base, str(path), os.path.dirname(os.path.abspath(path)))


def dump_config(cfg: PipelineConfig) -> str:
    """Text form of ``cfg``; ``parse_config(dump_config(c)) == c``."""
    r, s, t = cfg.segment.rule, cfg.segment, cfg.track
    vals = {
        "skin.cb_min": r.cb[0],
        "skin.cb_max": r.cb[1],
        "skin.cr_min": r.cr[0],
        "skin.cr_max": r.cr[1],
        "skin.y_min": r.y_min,
        "morph.erode_radius": s.erode_radius,
        "morph.dilate_radius": s.dilate_radius,
        "segment.min_area_frac": s.min_area_frac,
        "pf.particles": t.n_particles,
        "pf.sigma_motion": t.sigma_motion,
        "pf.lambda": t.lam,
        "pf.min_similarity": t.min_similarity,
        "pf.bins": t.bins,
    }
    for key, (section, attr, _, _) in _KEYS.items():
        if section is None:
            vals[key] = getattr(cfg, attr)
    return "".join(f"{k} = {v}\n" for k, v in vals.items() if v is not None)

