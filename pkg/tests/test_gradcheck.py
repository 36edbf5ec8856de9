import pytest
import torch
import torch.nn.functional as F

from src.data.loader import VideoDataset, collate_videos
from src.data.synthetic import generate_synthetic_action
from src.models.config import BackboneConfig, MapleConfig
from src.models.destformer import DestFormer, prediction_head
from src.models.maple import TemporalDecoder, decode_full, encode_visible, maple_loss, sample_mask
from tests.grad_helper import central_difference, relative_error, sample_indices

ALPHA = 0.5
SAMPLE_FRACTION = 0.05
TOLERANCE = 1e-3


@pytest.fixture
def setup():
    """Float64 backbone and decoder on two 4-frame, 8-point videos."""
    torch.manual_seed(0)
    cfg = BackboneConfig(
        feature_dim=8,
        heads=2,
        spatial_blocks=1,
        temporal_blocks=1,
        neighbors=4,
        radius=0.7,
        num_classes=2,
    )
    model = DestFormer(cfg).double()
    torch.nn.init.normal_(model.head.fc2.weight, std=0.5)
    decoder = TemporalDecoder.for_backbone(model, MapleConfig(decoder_blocks=1, max_tokens=8))
    decoder = decoder.double()

    videos = [generate_synthetic_action(c, frames=4, points=8, seed=c) for c in (0, 1)]
    dataset = VideoDataset.from_videos(videos, cfg.grouping)
    batch = collate_videos([dataset[0], dataset[1]]).to(torch.float64)
    mask = sample_mask(batch.grouping.num_segments, 0.5, seed=0)
    with torch.no_grad():
        target = model(batch.points, batch.grouping).distribution.probs

    def loss_fn():
        out = model(batch.points, batch.grouping)
        supervised = F.cross_entropy(out.logits, batch.labels)
        reconstruction = decode_full(decoder, encode_visible(model, out.tokens, mask), mask)
        _, prediction = prediction_head(model, reconstruction)
        return supervised + ALPHA * maple_loss(target, prediction.probs)

    return model, decoder, loss_fn


class TestGradientCheck:
    def test_autograd_matches_finite_differences(self, setup):
        """Sampled entries of every parameter agree with central differences."""
        model, decoder, loss_fn = setup
        params = [(f"backbone.{n}", p) for n, p in model.named_parameters()]
        params += [(f"decoder.{n}", p) for n, p in decoder.named_parameters()]

        loss_fn().backward()
        generator = torch.Generator().manual_seed(1)
        worst = {}
        for name, param in params:
            analytic = param.grad if param.grad is not None else torch.zeros_like(param)
            indices = sample_indices(param, SAMPLE_FRACTION, generator)
            numeric = central_difference(loss_fn, param, indices)
            worst[name] = relative_error(analytic.view(-1)[indices].detach(), numeric)

        failed = {name: err for name, err in worst.items() if err > TOLERANCE}
        assert not failed, failed

    def test_loss_has_both_terms(self, setup):
        """The checked objective is not dominated by a vanishing autoencoder term."""
        model, decoder, loss_fn = setup
        loss_fn().backward()
        assert decoder.proj.weight.grad.abs().sum() > 0
        assert decoder.mask_token.grad.abs().sum() > 0
