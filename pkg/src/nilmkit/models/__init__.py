"""Disaggregation models: recurrent, convolutional, adversarial and autoregressive."""

from nilmkit.models.ar import ar_fit, ar_fit_predict, ar_predict
from nilmkit.models.checkpoint import load_any, load_checkpoint, load_gan, save_checkpoint, save_gan
from nilmkit.models.gan import GanPair, build_energan, gan_disaggregate, gan_fit, gan_train_step
from nilmkit.models.network import Network
from nilmkit.models.spec import (
    FEEDBACK, LayerSpec, ModelSpec, build_cobilstm, build_energan_specs, build_tdlcnn,
)
from nilmkit.models.training import TrainedModel, disaggregate, fit, recurrent_refine, train

__all__ = [
    "ar_fit", "ar_fit_predict", "ar_predict", "load_any", "load_checkpoint", "load_gan",
    "save_checkpoint", "save_gan", "GanPair", "build_energan", "gan_disaggregate", "gan_fit",
    "gan_train_step", "Network", "FEEDBACK", "LayerSpec", "ModelSpec", "build_cobilstm",
    "build_energan_specs", "build_tdlcnn", "TrainedModel", "disaggregate", "fit",
    "recurrent_refine", "train",
]
