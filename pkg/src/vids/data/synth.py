"""Desk-scale synthetic BSM streams with injected misbehavior.

Normal vehicles follow forward-Euler kinematics, so the reported stream
satisfies pos(t+dt) = pos(t) + spd(t)*dt up to the configured sensor noise.
Each injector falsifies exactly one targeted field of the reported stream
while the underlying true motion stays normal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import VidsError
from .records import BsmRecord

# injector name -> attack class label
INJECTOR_LABELS = {
    "constant_position": 1,
    "constant_offset": 2,
    "random_position": 3,
    "random_offset": 4,
    "constant_speed": 5,
    "speed_offset": 6,
    "random_speed": 7,
    "eventual_stop": 9,
    "replay": 16,
}


@dataclass
class SynthConfig:
    normal_vehicles: int = 10
    attacks: dict = field(default_factory=dict)   # injector name -> vehicle count
    messages: int = 200                           # per vehicle
    dt: float = 1.0
    noise_std: float = 0.0                        # sensor noise on reported values
    area: float = 500.0                           # positions start in [0, area]^2
    speed_min: float = 5.0
    speed_max: float = 15.0
    accel_scale: float = 0.5                      # 0 disables acceleration
    offset_scale: float = 80.0                    # constant/random offset magnitude
    replay_delay: int = 25                        # messages of staleness
    stop_fraction: float = 0.25                   # eventual_stop trigger point

    def validate(self):
        for name in self.attacks:
            if name not in INJECTOR_LABELS:
                raise VidsError(f"unknown injector {name!r}; valid: "
                                f"{sorted(INJECTOR_LABELS)}")


def synth_generate(config: SynthConfig, seed: int = 0) -> list:
    """Generate a deterministic record stream for the configured scenario."""
    config.validate()
    rng = np.random.default_rng(seed)
    records: list[BsmRecord] = []
    sender = 0

    normal_tracks = []
    for _ in range(config.normal_vehicles):
        track = _simulate_track(config, rng)
        normal_tracks.append(track)
        records.extend(_emit(track, sender, 0, config, rng))
        sender += 1

    for name in sorted(config.attacks):
        label = INJECTOR_LABELS[name]
        for _ in range(config.attacks[name]):
            track = _simulate_track(config, rng)
            reported, labels = _inject(name, track, normal_tracks, config, rng)
            records.extend(_emit(reported, sender, labels, config, rng))
            sender += 1
    return records


def _simulate_track(config: SynthConfig, rng) -> dict:
    """True motion: record state, then integrate, so the pos/spd residual of
    consecutive reports is exactly zero before sensor noise."""
    n, dt = config.messages, config.dt
    pos = rng.uniform(0.0, config.area, size=2)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    speed = rng.uniform(config.speed_min, config.speed_max)
    spd = speed * np.array([math.cos(angle), math.sin(angle)])
    acl = np.zeros(2)
    track = {k: np.zeros((n, 2)) for k in ("pos", "spd", "acl", "hed")}
    for t in range(n):
        track["pos"][t] = pos
        track["spd"][t] = spd
        track["acl"][t] = acl
        norm = np.linalg.norm(spd)
        track["hed"][t] = spd / norm if norm > 1e-9 else track["hed"][t - 1]
        pos = pos + spd * dt
        spd = spd + acl * dt
        if config.accel_scale > 0:
            acl = np.clip(acl + rng.normal(0.0, config.accel_scale, size=2) * dt,
                          -2.0 * config.accel_scale, 2.0 * config.accel_scale)
    return track


def _inject(name: str, track: dict, normal_tracks: list, config: SynthConfig,
            rng) -> tuple:
    """Return (falsified track, per-message labels)."""
    n = config.messages
    out = {k: v.copy() for k, v in track.items()}
    labels = np.full(n, INJECTOR_LABELS[name], dtype=np.int64)

    if name == "constant_position":
        out["pos"][:] = track["pos"][0]
    elif name == "constant_offset":
        out["pos"] += rng.uniform(0.5, 1.0) * config.offset_scale * _unit(rng)
    elif name == "random_position":
        out["pos"] = rng.uniform(0.0, config.area, size=(n, 2))
    elif name == "random_offset":
        out["pos"] += rng.uniform(-config.offset_scale, config.offset_scale,
                                  size=(n, 2))
    elif name == "constant_speed":
        speed = rng.uniform(config.speed_min, config.speed_max)
        out["spd"][:] = speed * _unit(rng)
    elif name == "speed_offset":
        out["spd"] += rng.uniform(0.5, 1.0) * config.speed_max * _unit(rng)
    elif name == "random_speed":
        out["spd"] = rng.uniform(-config.speed_max, config.speed_max, size=(n, 2))
    elif name == "eventual_stop":
        stop = max(1, int(n * config.stop_fraction))
        out["pos"][stop:] = track["pos"][stop]
        labels[:stop] = 0
    elif name == "replay":
        victim = normal_tracks[rng.integers(0, len(normal_tracks))]
        idx = np.maximum(np.arange(n) - config.replay_delay, 0)
        out["pos"] = victim["pos"][idx]
    return out, labels


def _unit(rng) -> np.ndarray:
    angle = rng.uniform(0.0, 2.0 * math.pi)
    return np.array([math.cos(angle), math.sin(angle)])


def _emit(track: dict, sender: int, labels, config: SynthConfig, rng) -> list:
    n = config.messages
    if np.isscalar(labels):
        labels = np.full(n, labels, dtype=np.int64)
    noise = {k: rng.normal(0.0, config.noise_std, size=(n, 2))
             if config.noise_std > 0 else np.zeros((n, 2))
             for k in ("pos", "spd", "acl")}
    records = []
    for t in range(n):
        pos = track["pos"][t] + noise["pos"][t]
        spd = track["spd"][t] + noise["spd"][t]
        acl = track["acl"][t] + noise["acl"][t]
        hed = track["hed"][t]
        records.append(BsmRecord(
            send_time=t * config.dt, sender_id=sender, pseudo_id=10000 + sender,
            message_id=sender * n + t,
            pos_x=pos[0], pos_y=pos[1], spd_x=spd[0], spd_y=spd[1],
            acl_x=acl[0], acl_y=acl[1], hed_x=hed[0], hed_y=hed[1],
            label=int(labels[t])))
    return records


def serialize_synth_labels(records) -> str:
    """Sidecar sender -> class mapping; an attacking sender's class is the
    attack label even when its early messages are still honest."""
    import json
    labels: dict[int, int] = {}
    for r in records:
        labels[r.sender_id] = max(labels.get(r.sender_id, 0), r.label)
    return json.dumps({str(k): v for k, v in sorted(labels.items())},
                      sort_keys=True)


def kinematic_residuals(records, dt: float) -> np.ndarray:
    """Per-step ||pos(t+dt) - pos(t) - spd(t)*dt|| for consecutive reports of
    each sender, concatenated over senders."""
    by_sender: dict[int, list] = {}
    for r in records:
        by_sender.setdefault(r.sender_id, []).append(r)
    out = []
    for recs in by_sender.values():
        recs = sorted(recs, key=lambda r: r.send_time)
        pos = np.array([[r.pos_x, r.pos_y] for r in recs])
        spd = np.array([[r.spd_x, r.spd_y] for r in recs])
        res = pos[1:] - pos[:-1] - spd[:-1] * dt
        out.append(np.linalg.norm(res, axis=1))
    return np.concatenate(out) if out else np.zeros(0)


def violation_pvalue(violations: int, total: int, null_rate: float) -> float:
    """Upper-tail binomial p-value for observing >= violations under a null
    per-message violation rate (exact, via log factorials)."""
    if total == 0:
        return 1.0
    null_rate = min(max(null_rate, 1e-12), 1.0 - 1e-12)
    log_p, log_q = math.log(null_rate), math.log(1.0 - null_rate)
    total_f = math.lgamma(total + 1)
    acc = 0.0
    for k in range(violations, total + 1):
        log_term = (total_f - math.lgamma(k + 1) - math.lgamma(total - k + 1)
                    + k * log_p + (total - k) * log_q)
        acc += math.exp(log_term)
    return min(acc, 1.0)
