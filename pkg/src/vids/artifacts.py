"""Packing trained artifacts into weight containers and back.

Every artifact kind is a single container: tensors carry the weights (plus
Mahalanobis statistics, normalization stats, quantization payloads), the
metadata table carries configs, graph structure, thresholds, and class lists
as JSON.  Round trips are bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from .compress.quant import QuantizedModel, QuantParams
from .container import (deserialize_container, load_container, save_container,
                        serialize_container)
from .data.windows import NormStats
from .errors import ContainerError
from .stage1.model import BiganModel, Stage1Config, build_bigan
from .stage1.scoring import MahalanobisStats, ThresholdModel
from .stage2.model import Stage2Config, Stage2Model
from .tensor import GraphSpec, OptimizerConfig, ParamStore, Tensor


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def _config_to_dict(config) -> dict:
    d = asdict(config)
    for key, val in d.items():
        if isinstance(val, tuple):
            d[key] = list(val)
    return d


def _stage1_config_from_dict(d: dict) -> Stage1Config:
    d = dict(d)
    d["optimizer"] = OptimizerConfig(**d["optimizer"])
    return Stage1Config(**d)


def _stage2_config_from_dict(d: dict) -> Stage2Config:
    d = dict(d)
    d["optimizer"] = OptimizerConfig(**d["optimizer"])
    d["conv_channels"] = tuple(d["conv_channels"])
    return Stage2Config(**d)


def _param_entries(params: ParamStore) -> dict:
    return {name: (tensor.data, None) for name, tensor in params.tensors.items()}


def _norm_entries(norm: NormStats | None) -> dict:
    if norm is None:
        return {}
    return {"norm.mean": (norm.mean.astype(np.float64), None),
            "norm.std": (norm.std.astype(np.float64), None)}


def _norm_from_entries(tensors: dict) -> NormStats | None:
    if "norm.mean" not in tensors:
        return None
    return NormStats(mean=tensors["norm.mean"][0], std=tensors["norm.std"][0])


# ---------------------------------------------------------------------------
# stage 1


def stage1_entries(model: BiganModel, stats: MahalanobisStats | None = None,
                   thresholds: ThresholdModel | None = None,
                   norm: NormStats | None = None) -> tuple:
    tensors = {}
    for store in (model.enc_params, model.gen_params, model.disc_params):
        tensors.update(_param_entries(store))
    if stats is not None:
        tensors["mahala.mu"] = (stats.mu.astype(np.float64), None)
        tensors["mahala.sigma_inv"] = (stats.sigma_inv.astype(np.float64), None)
    tensors.update(_norm_entries(norm))
    meta = {
        "kind": "stage1",
        "config": _dump(_config_to_dict(model.config)),
        "graph.encoder": _dump(model.encoder.to_dict()),
        "graph.generator": _dump(model.generator.to_dict()),
        "graph.discriminator": _dump(model.discriminator.to_dict()),
    }
    if thresholds is not None:
        meta["thresholds"] = _dump(thresholds.to_dict())
    return tensors, meta


def save_stage1(path, model: BiganModel, stats=None, thresholds=None,
                norm=None) -> None:
    tensors, meta = stage1_entries(model, stats, thresholds, norm)
    save_container(path, tensors, meta)


def load_stage1(path) -> dict:
    tensors, meta = load_container(path)
    if meta.get("kind") != "stage1":
        raise ContainerError(f"expected a stage1 container, got {meta.get('kind')!r}")
    config = _stage1_config_from_dict(json.loads(meta["config"]))
    model = build_bigan(config)
    for store in (model.enc_params, model.gen_params, model.disc_params):
        for name in store.tensors:
            store[name] = Tensor(tensors[name][0].copy(), requires_grad=True)
    stats = None
    if "mahala.mu" in tensors:
        stats = MahalanobisStats(mu=tensors["mahala.mu"][0],
                                 sigma_inv=tensors["mahala.sigma_inv"][0])
    thresholds = (ThresholdModel.from_dict(json.loads(meta["thresholds"]))
                  if "thresholds" in meta else None)
    return {"model": model, "stats": stats, "thresholds": thresholds,
            "norm": _norm_from_entries(tensors)}


# ---------------------------------------------------------------------------
# stage 2 (float)


def stage2_entries(model: Stage2Model, norm: NormStats | None = None,
                   unseen_threshold: float | None = None,
                   unseen_percentile: float | None = None) -> tuple:
    tensors = _param_entries(model.params)
    tensors.update(_norm_entries(norm))
    meta = {
        "kind": "stage2",
        "config": _dump(_config_to_dict(model.config)),
        "graph": _dump(model.graph.to_dict()),
        "classes": _dump(model.classes),
    }
    if unseen_threshold is not None:
        meta["unseen.threshold"] = repr(float(unseen_threshold))
        meta["unseen.percentile"] = repr(float(unseen_percentile
                                               if unseen_percentile is not None
                                               else 91.0))
    return tensors, meta


def save_stage2(path, model: Stage2Model, norm=None, unseen_threshold=None,
                unseen_percentile=None) -> None:
    tensors, meta = stage2_entries(model, norm, unseen_threshold,
                                   unseen_percentile)
    save_container(path, tensors, meta)


def load_stage2(path) -> dict:
    tensors, meta = load_container(path)
    if meta.get("kind") != "stage2":
        raise ContainerError(f"expected a stage2 container, got {meta.get('kind')!r}")
    config = _stage2_config_from_dict(json.loads(meta["config"]))
    graph = GraphSpec.from_dict(json.loads(meta["graph"]))
    params = ParamStore()
    for name, (arr, _) in tensors.items():
        if name.startswith("norm."):
            continue
        params[name] = Tensor(arr.copy(), requires_grad=True)
    model = Stage2Model(config=config, graph=graph, params=params,
                        classes=json.loads(meta["classes"]))
    out = {"model": model, "norm": _norm_from_entries(tensors),
           "unseen_threshold": None, "unseen_percentile": None}
    if "unseen.threshold" in meta:
        out["unseen_threshold"] = float(meta["unseen.threshold"])
        out["unseen_percentile"] = float(meta["unseen.percentile"])
    return out


# ---------------------------------------------------------------------------
# stage 2 (quantized)


def quantized_entries(qmodel: QuantizedModel, classes, config: Stage2Config,
                      norm: NormStats | None = None) -> tuple:
    tensors = {}
    for name, arr in qmodel.weights.items():
        tensors[name] = (arr, qmodel.weight_qp[name])
    for name, arr in qmodel.biases.items():
        qp = QuantParams(scale=qmodel.bias_scales[name], zero_point=0,
                         bits=32, scheme="symmetric_weight")
        tensors[name] = (arr, qp)
    for name, arr in qmodel.float_tensors.items():
        tensors[name] = (arr.astype(np.float32), None)
    tensors.update(_norm_entries(norm))
    meta = {
        "kind": "stage2_quant",
        "config": _dump(_config_to_dict(config)),
        "graph": _dump(qmodel.graph.to_dict()),
        "classes": _dump(list(classes)),
        "bits": str(qmodel.bits),
        "act_qp": _dump({site: qp.to_dict()
                         for site, qp in sorted(qmodel.act_qp.items())}),
    }
    return tensors, meta


def save_quantized(path, qmodel: QuantizedModel, classes, config,
                   norm=None) -> None:
    tensors, meta = quantized_entries(qmodel, classes, config, norm)
    save_container(path, tensors, meta)


def load_quantized(path) -> dict:
    tensors, meta = load_container(path)
    if meta.get("kind") != "stage2_quant":
        raise ContainerError(f"expected a quantized container, got "
                             f"{meta.get('kind')!r}")
    graph = GraphSpec.from_dict(json.loads(meta["graph"]))
    weights, weight_qp, biases, bias_scales, float_tensors = {}, {}, {}, {}, {}
    for name, (arr, qp) in tensors.items():
        if name.startswith("norm."):
            continue
        if qp is None:
            float_tensors[name] = arr
        elif name.endswith(".bias"):
            biases[name] = arr
            bias_scales[name] = qp.scale
        else:
            weights[name] = arr
            weight_qp[name] = qp
    act_qp = {site: QuantParams.from_dict(d)
              for site, d in json.loads(meta["act_qp"]).items()}
    qmodel = QuantizedModel(graph=graph, bits=int(meta["bits"]),
                            weights=weights, weight_qp=weight_qp,
                            biases=biases, bias_scales=bias_scales,
                            float_tensors=float_tensors, act_qp=act_qp)
    return {"qmodel": qmodel,
            "classes": json.loads(meta["classes"]),
            "config": _stage2_config_from_dict(json.loads(meta["config"])),
            "norm": _norm_from_entries(tensors)}


# ---------------------------------------------------------------------------
# window caches


def save_windows(path, values: np.ndarray, labels: np.ndarray,
                 senders: np.ndarray, extra_meta: dict | None = None) -> None:
    tensors = {
        "windows.values": (np.asarray(values, dtype=np.float32), None),
        "windows.labels": (np.asarray(labels, dtype=np.int32), None),
        "windows.senders": (np.asarray(senders, dtype=np.int32), None),
    }
    meta = {"kind": "windows"}
    meta.update({k: str(v) for k, v in (extra_meta or {}).items()})
    save_container(path, tensors, meta)


def load_windows(path) -> dict:
    tensors, meta = load_container(path)
    if meta.get("kind") != "windows":
        raise ContainerError(f"expected a windows container, got {meta.get('kind')!r}")
    return {"values": tensors["windows.values"][0],
            "labels": tensors["windows.labels"][0].astype(np.int64),
            "senders": tensors["windows.senders"][0].astype(np.int64),
            "meta": meta}


# ---------------------------------------------------------------------------
# size measurement (used by profiling reports)


def stage2_container_bytes(model: Stage2Model, norm=None) -> int:
    tensors, meta = stage2_entries(model, norm)
    return len(serialize_container(tensors, meta))


def quantized_container_bytes(qmodel: QuantizedModel, classes, config,
                              norm=None) -> int:
    tensors, meta = quantized_entries(qmodel, classes, config, norm)
    return len(serialize_container(tensors, meta))
