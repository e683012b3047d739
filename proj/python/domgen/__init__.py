"""Adaptive domain generalization: prototypical domain embeddings, domain-aware
training and a synthetic long-tailed multi-domain benchmark generator."""

from ._core import (
    AdaptiveModel,
    BenchmarkSplit,
    ConsistencyCurve,
    DomainDataset,
    DomainPrototype,
    DomgenError,
    EmbeddingVariant,
    EvalReport,
    EvalRow,
    IoError,
    LtConfig,
    MlpParams,
    MotherSpec,
    Penalty,
    ProtoConfig,
    ShiftKind,
    TrainConfig,
    TrainedDomainAware,
    accuracy,
    adaptive_infer,
    compute_prototype,
    consistency_experiment,
    coral_penalty,
    domain_membership_probs,
    embed_rows,
    evaluate_model,
    generate_lt_benchmark,
    load_external_dataset,
    load_mlp,
    load_model,
    make_mother_spec,
    mixup_domains,
    mmd_penalty,
    proto_train,
    save_benchmark,
    save_mlp,
    save_model,
    train_domain_aware,
)

__all__ = [
    "AdaptiveModel",
    "BenchmarkSplit",
    "ConsistencyCurve",
    "DomainDataset",
    "DomainPrototype",
    "DomgenError",
    "EmbeddingVariant",
    "EvalReport",
    "EvalRow",
    "IoError",
    "LtConfig",
    "MlpParams",
    "MotherSpec",
    "Penalty",
    "ProtoConfig",
    "ShiftKind",
    "TrainConfig",
    "TrainedDomainAware",
    "accuracy",
    "adaptive_infer",
    "compute_prototype",
    "consistency_experiment",
    "coral_penalty",
    "domain_membership_probs",
    "embed_rows",
    "evaluate_model",
    "generate_lt_benchmark",
    "load_external_dataset",
    "load_mlp",
    "load_model",
    "make_mother_spec",
    "mixup_domains",
    "mmd_penalty",
    "proto_train",
    "save_benchmark",
    "save_mlp",
    "save_model",
    "train_domain_aware",
]
