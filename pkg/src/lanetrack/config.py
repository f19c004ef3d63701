"""Flat ``key = value`` configuration files and the layered settings built
from them.

One namespace covers scenarios and module settings::

    n_frames = 80                 # scenario keys are unprefixed
    lane = left, 325.9, 0, 47.9, 0
    lane = right, -103.4, 0, 132.1, 0   # list keys repeat
    obs.sigma = 25, 0, 0, 4       # module keys carry a prefix
    pf.n_particles = 500

Layers are applied in order (preset, user file, command-line overrides) and
the last one to mention a key wins; for list keys the whole list is replaced.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .detection import DetectionConfig
from .dynamics import DynamicsConfig
from .geometry import ImageGeometry, LaneState, LineParam
from .kalman import KalmanConfig
from .observation import ObservationConfig
from .particle import ParticleConfig
from .simulator import ClutterMode, Dropout, ScenarioConfig


class ConfigError(ValueError):
    pass


def _floats(n=None):
    def parse(v: str):
        try:
            out = tuple(float(p) for p in v.split(","))
        except ValueError:
            raise ValueError(f"expected comma-separated numbers, got {v!r}") from None
        if n is not None and len(out) != n:
            raise ValueError(f"expected {n} numbers, got {len(out)}")
        return out if n != 1 else out[0]

    return parse


def _int(v: str) -> int:
    return int(v)


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _str(v: str) -> str:
    return v.strip()


def _tagged(n):
    """``name, x1, ..., xn``"""

    def parse(v: str):
        head, _, rest = v.partition(",")
        return (head.strip(), *_floats(n)(rest))

    return parse


def _optional(parse):
    def wrapped(v: str):
        return None if v.strip().lower() == "none" else parse(v)

    return wrapped


# key -> (parser, is_list)
SCHEMA = {
    "name": (_str, False),
    "n_frames": (_int, False),
    "seed": (_int, False),
    "T": (_floats(1), False),
    "sigma_rho": (_floats(1), False),
    "sigma_theta": (_floats(1), False),
    "width": (_int, False),
    "height": (_int, False),
    "focus": (_floats(2), False),
    "lane": (_tagged(4), True),
    "clutter": (_floats(6), True),
    "dropout": (_tagged(2), True),
    "detection_noise": (_floats(2), False),
    "true_score": (_int, False),
    "clutter_score": (_int, False),
    "stripe_brightness": (_floats(1), False),
    "clutter_brightness": (_floats(1), False),
    "background": (_floats(1), False),
    "pixel_noise": (_floats(1), False),
    "rho_box": (_floats(2), False),
    "left_theta": (_floats(2), False),
    "right_theta": (_floats(2), False),
    "obs.sigma": (_floats(4), False),
    "obs.uniform_density": (_optional(_floats(1)), False),
    "obs.epsilon": (_floats(1), False),
    "kf.R": (_floats(4), False),
    "kf.joseph": (_bool, False),
    "kf.init_cov": (_floats(4), False),
    "pf.n_particles": (_int, False),
    "pf.resample_threshold": (_floats(1), False),
    "pf.init_velocity_sigma": (_floats(2), False),
    "pf.sort": (_bool, False),
    "detect.downscale_to": (_floats(2), False),
    "detect.gradient_threshold": (_floats(1), False),
    "detect.rho_resolution": (_floats(1), False),
    "detect.theta_resolution": (_floats(1), False),
    "detect.accumulator_threshold": (_int, False),
    "detect.theta_limits": (_floats(2), False),
    "detect.theta_exclude": (_optional(_floats(2)), False),
    "detect.rho_limits": (_floats(2), False),
    "detect.roi": (_optional(_floats()), False),
    "detect.scanline_step": (_int, False),
    "detect.reducer": (_str, False),
    "detect.merge_px": (_floats(1), False),
    "detect.merge_theta": (_floats(1), False),
    "detect.refine_band": (_floats(1), False),
}


@dataclass(frozen=True)
class Entry:
    key: str
    raw: str
    value: object
    source: str
    line: int


def parse_kv(text: str, source: str = "<string>") -> list[Entry]:
    entries = []
    for n, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {raw_line.strip()!r}")
        entries.append(_entry(key, value.strip(), source, n))
    return entries


def _entry(key, raw, source, n) -> Entry:
    if key not in SCHEMA:
        raise ConfigError(f"{source}:{n}: unknown key {key!r}")
    parse, _ = SCHEMA[key]
    try:
        value = parse(raw)
    except ValueError as e:
        raise ConfigError(f"{source}:{n}: {key}: {e}") from None
    return Entry(key, raw, value, source, n)


def parse_override(text: str, index: int = 0) -> Entry:
    key, sep, value = text.partition("=")
    if not sep:
        raise ConfigError(f"--set #{index + 1}: expected key=value, got {text!r}")
    return _entry(key.strip(), value.strip(), "--set", index + 1)


class Settings:
    """Layered, validated key/value settings."""

    def __init__(self):
        self._values: dict[str, object] = {}
        self._raw: dict[str, list[str]] = {}

    def apply(self, entries: list[Entry]) -> "Settings":
        seen: set[str] = set()
        for e in entries:
            is_list = SCHEMA[e.key][1]
            if is_list:
                if e.key not in seen:
                    self._values[e.key] = []
                    self._raw[e.key] = []
                self._values[e.key].append(e.value)
                self._raw[e.key].append(e.raw)
            else:
                self._values[e.key] = e.value
                self._raw[e.key] = [e.raw]
            seen.add(e.key)
        return self

    def get(self, key: str, default=None):
        if key not in SCHEMA:
            raise KeyError(key)
        return self._values.get(key, default)

    def __contains__(self, key: str) -> bool:
        return key in self._values

    def dump(self) -> str:
        """Effective settings in file syntax (sorted, lists in order)."""
        lines = []
        for key in sorted(self._raw):
            for raw in self._raw[key]:
                lines.append(f"{key} = {raw}")
        return "\n".join(lines) + "\n"


PRESETS = ("A", "B", "C", "D", "E", "linear")


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (choose from {', '.join(PRESETS)})")
    return resources.files("lanetrack").joinpath("presets", f"{name}.cfg").read_text()


def load_settings(preset: str | None = None, files=(), overrides=()) -> Settings:
    s = Settings()
    if preset is not None:
        s.apply(parse_kv(preset_text(preset), f"preset:{preset}"))
    for path in files:
        with open(path) as f:
            s.apply(parse_kv(f.read(), str(path)))
    s.apply([parse_override(o, i) for i, o in enumerate(overrides)])
    return s


# -- builders -----------------------------------------------------------------


def _mat2(v):
    a, b, c, d = v
    return ((a, b), (c, d))


def dynamics_config(s: Settings) -> DynamicsConfig:
    d = DynamicsConfig()
    return DynamicsConfig(s.get("T", d.T), s.get("sigma_rho", d.sigma_rho), s.get("sigma_theta", d.sigma_theta))


def geometry(s: Settings) -> ImageGeometry:
    g = ImageGeometry()
    return ImageGeometry(s.get("width", g.width), s.get("height", g.height), tuple(s.get("focus", g.focus_point)))


def side_limits(s: Settings):
    return (("left", s.get("left_theta", (15.0, 75.0))), ("right", s.get("right_theta", (105.0, 165.0))))


def observation_config(s: Settings) -> ObservationConfig:
    d = ObservationConfig()
    det = detection_config(s)
    rho_box = s.get("rho_box", d.rho_box)
    theta_box = det.theta_limits
    uniform = s.get("obs.uniform_density")
    if uniform is None:
        uniform = 1.0 / ((rho_box[1] - rho_box[0]) * (theta_box[1] - theta_box[0]))
    return ObservationConfig(
        sigma=_mat2(s.get("obs.sigma", (25.0, 0.0, 0.0, 4.0))),
        uniform_density=uniform,
        epsilon_dist=s.get("obs.epsilon", d.epsilon_dist),
        rho_box=tuple(rho_box),
        theta_box=tuple(theta_box),
    )


def kalman_config(s: Settings) -> KalmanConfig:
    return KalmanConfig(
        dynamics=dynamics_config(s),
        R=_mat2(s.get("kf.R", (5.0, 0.0, 0.0, 5.0))),
        joseph=s.get("kf.joseph", False),
        init_cov=tuple(s.get("kf.init_cov", KalmanConfig().init_cov)),
    )


def particle_config(s: Settings, seed: int = 0, n_particles: int | None = None) -> ParticleConfig:
    d = ParticleConfig()
    return ParticleConfig(
        n_particles=n_particles or s.get("pf.n_particles", d.n_particles),
        dynamics=dynamics_config(s),
        obs_cfg=observation_config(s),
        resample_threshold=s.get("pf.resample_threshold", d.resample_threshold),
        rng_seed=seed,
        init_velocity_sigma=tuple(s.get("pf.init_velocity_sigma", d.init_velocity_sigma)),
        sort=s.get("pf.sort", d.sort),
    )


def detection_config(s: Settings) -> DetectionConfig:
    d = DetectionConfig()
    roi = s.get("detect.roi", None)
    if roi is not None:
        if len(roi) < 6 or len(roi) % 2:
            raise ConfigError("detect.roi needs at least three x, y pairs")
        roi = tuple(zip(roi[::2], roi[1::2]))
    ds = s.get("detect.downscale_to", d.downscale_to)
    return DetectionConfig(
        downscale_to=(int(ds[0]), int(ds[1])),
        gradient_threshold=s.get("detect.gradient_threshold", d.gradient_threshold),
        hough_rho_resolution=s.get("detect.rho_resolution", d.hough_rho_resolution),
        hough_theta_resolution=s.get("detect.theta_resolution", d.hough_theta_resolution),
        accumulator_threshold=s.get("detect.accumulator_threshold", d.accumulator_threshold),
        theta_limits=tuple(s.get("detect.theta_limits", d.theta_limits)),
        theta_exclude=s.get("detect.theta_exclude", d.theta_exclude),
        rho_limits=tuple(s.get("detect.rho_limits", d.rho_limits)),
        roi=roi,
        scanline_step=s.get("detect.scanline_step", d.scanline_step),
        channel_reducer=s.get("detect.reducer", d.channel_reducer),
        merge_px=s.get("detect.merge_px", d.merge_px),
        merge_theta=s.get("detect.merge_theta", d.merge_theta),
        refine_band=s.get("detect.refine_band", d.refine_band),
    )


def scenario_config(s: Settings) -> ScenarioConfig:
    d = ScenarioConfig()
    lanes = tuple((name, LaneState(*vals)) for name, *vals in s.get("lane", []))
    if not lanes:
        raise ConfigError("scenario needs at least one 'lane = name, rho, v_rho, theta, v_theta' entry")
    clutter = tuple(
        ClutterMode(LineParam(rho, theta), int(first), int(last), (jr, jt))
        for rho, theta, first, last, jr, jt in s.get("clutter", [])
    )
    drops = tuple(Dropout(side, int(first), int(last)) for side, first, last in s.get("dropout", []))
    try:
        return ScenarioConfig(
            name=s.get("name", d.name),
            n_frames=s.get("n_frames", d.n_frames),
            dynamics=DynamicsConfig(s.get("T", d.dynamics.T), s.get("sigma_rho", d.dynamics.sigma_rho), s.get("sigma_theta", d.dynamics.sigma_theta)),
            lanes=lanes,
            clutter_modes=clutter,
            dropout_ranges=drops,
            detection_noise_sigma=tuple(s.get("detection_noise", d.detection_noise_sigma)),
            true_candidate_score=s.get("true_score", d.true_candidate_score),
            clutter_score=s.get("clutter_score", d.clutter_score),
            geometry=geometry(s),
            seed=s.get("seed", d.seed),
            rho_box=tuple(s.get("rho_box", d.rho_box)),
            side_limits=side_limits(s),
            stripe_brightness=s.get("stripe_brightness", d.stripe_brightness),
            clutter_brightness=s.get("clutter_brightness", d.clutter_brightness),
            background=s.get("background", d.background),
            pixel_noise=s.get("pixel_noise", d.pixel_noise),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from None
