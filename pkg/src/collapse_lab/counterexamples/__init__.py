"""Shallow networks trained by gradient flow that do not collapse classes."""
from .mean_field import (
    MarginDataset,
    MarginReport,
    MeanFieldRun,
    ParticleEnsemble,
    f_b_classifier,
    f_b_ensemble,
    fit_b,
    init_ensemble,
    margin_report,
    train_mean_field_relu,
)
from .three_neuron import (
    ThreeNeuronState,
    Trajectory,
    class_gap,
    integrate_three_neuron,
    limit_gap,
    three_neuron_rhs,
)

__all__ = [
    "MarginDataset", "MarginReport", "MeanFieldRun", "ParticleEnsemble", "f_b_classifier",
    "f_b_ensemble", "fit_b", "init_ensemble", "margin_report", "train_mean_field_relu",
    "ThreeNeuronState", "Trajectory", "class_gap", "integrate_three_neuron", "limit_gap",
    "three_neuron_rhs",
]
