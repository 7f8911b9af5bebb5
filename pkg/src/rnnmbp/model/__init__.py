"""Multi-scale bidirectional recurrent deblurring network."""
from ..config import ModelConfig
from .cell import BaselineCell, HiddenStateSet, UNetRNNCell
from .layers import ChannelAttentionBlock
from .network import FeatureExtractor, VideoDeblurNet, build_variant, check_frames, model_forward
from .params import count_parameters, parameter_shapes
from .reconstruct import PlainReconstructor, TargetFrameReconstructor
from .store import load_store, save_store


def save_model(path, model: VideoDeblurNet, extra=None):
    save_store(path, model.state_dict(), model.config.to_dict(), extra)


def load_model(path) -> VideoDeblurNet:
    tensors, header = load_store(path)
    if not header.get("model_config"):
        raise ValueError(f"{path} carries no model configuration")
    config = ModelConfig.from_dict(header["model_config"])
    model = VideoDeblurNet(config)
    params = {k: v for k, v in tensors.items() if not k.startswith("optim.")}
    model.load_state_dict(params)
    return model


__all__ = [
    "BaselineCell", "ChannelAttentionBlock", "FeatureExtractor", "HiddenStateSet", "PlainReconstructor",
    "TargetFrameReconstructor", "UNetRNNCell", "VideoDeblurNet", "build_variant", "check_frames",
    "count_parameters", "load_model", "load_store", "model_forward", "parameter_shapes", "save_model",
    "save_store",
]
