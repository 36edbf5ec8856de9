import math
from dataclasses import replace

import pytest
import torch
from torch import nn

from src.data.loader import GroupingBatch
from src.models.config import BackboneConfig, MapleConfig, config_hash
from src.models.destformer import (
    DestFormer,
    destformer_forward,
    p4conv_forward,
    prediction_head,
    spatial_pool,
    spatial_transformer_forward,
    temporal_encoder_forward,
)


@pytest.fixture
def model(tiny_backbone):
    torch.manual_seed(0)
    return DestFormer(tiny_backbone).eval()


class TestBackboneConfig:
    def test_heads_must_divide_width(self):
        """feature_dim must be a multiple of heads."""
        with pytest.raises(ValueError, match="divisible"):
            BackboneConfig(feature_dim=10, heads=4)

    @pytest.mark.parametrize(
        "override", [{"spatial_stride": 0}, {"radius": 0.0}, {"num_classes": 0}]
    )
    def test_invalid_values(self, override):
        """Nonpositive strides, radius or class count are rejected."""
        with pytest.raises(ValueError):
            BackboneConfig(**override)

    @pytest.mark.parametrize("field", ["spatial_blocks", "temporal_blocks"])
    def test_zero_blocks_rejected(self, field):
        """Both attention stacks need at least one block."""
        with pytest.raises(ValueError, match=f"{field} must be >= 1"):
            BackboneConfig(**{field: 0})

    def test_from_dict_rejects_unknown_keys(self):
        """Unknown keys are rejected."""
        with pytest.raises(ValueError, match="Unknown"):
            BackboneConfig.from_dict({"depth": 3})

    def test_hash_is_stable(self, tiny_backbone):
        """Equal configs share a hash, different configs do not."""
        again = BackboneConfig.from_dict(tiny_backbone.to_dict())
        assert config_hash(again) == config_hash(tiny_backbone)
        assert config_hash(tiny_backbone) != config_hash(BackboneConfig())
        assert config_hash(tiny_backbone, MapleConfig()) != config_hash(tiny_backbone)


class TestDestFormer:
    def test_output_shapes(self, model, sample_batch, tiny_backbone):
        """g and z are (B, L, D); v is (B, D); logits are (B, K)."""
        out = model(sample_batch.points, sample_batch.grouping)
        assert out.tokens.shape == (8, 4, tiny_backbone.feature_dim)
        assert out.latent.shape == (8, 4, tiny_backbone.feature_dim)
        assert out.feature.shape == (8, tiny_backbone.feature_dim)
        assert out.logits.shape == (8, tiny_backbone.num_classes)

    def test_fresh_head_predicts_uniform(self, model, sample_batch):
        """The zero-initialized output layer starts at the uniform distribution."""
        probs = model(sample_batch.points, sample_batch.grouping).distribution.probs
        torch.testing.assert_close(probs, torch.full_like(probs, 0.25))

    def test_component_functions_compose(self, model, sample_batch):
        """Chaining the stage functions reproduces forward()."""
        local = p4conv_forward(model, sample_batch.points, sample_batch.grouping)
        merged = spatial_transformer_forward(model, local)
        tokens = merged.max(dim=2).values
        latent = temporal_encoder_forward(model, tokens)
        feature, dist = prediction_head(model, latent)
        out = model(sample_batch.points, sample_batch.grouping)
        torch.testing.assert_close(tokens, out.tokens)
        torch.testing.assert_close(feature, out.feature)
        torch.testing.assert_close(dist.logits, out.logits)

        g, distribution = destformer_forward(model, sample_batch.points, sample_batch.grouping)
        torch.testing.assert_close(g, out.tokens)
        torch.testing.assert_close(distribution.probs, out.distribution.probs)

    def test_spatial_attention_stays_within_segment(self, model, sample_batch):
        """Moving the points of the last segment leaves earlier segment tokens unchanged."""
        before = model.extract_tokens(sample_batch.points, sample_batch.grouping)
        moved = sample_batch.points.clone()
        moved[:, 6:] += 0.3
        after = model.extract_tokens(moved, sample_batch.grouping)
        torch.testing.assert_close(after[:, :3], before[:, :3])
        assert not torch.allclose(after[:, 3], before[:, 3])

    def test_temporal_encoder_is_permutation_equivariant(self, model):
        """Without positional embeddings, permuting tokens permutes the output."""
        tokens = torch.randn(2, 5, model.cfg.feature_dim)
        perm = torch.tensor([3, 0, 4, 1, 2])
        out = temporal_encoder_forward(model, tokens)
        permuted = temporal_encoder_forward(model, tokens[:, perm])
        torch.testing.assert_close(permuted, out[:, perm])

    def test_classify_matches_forward(self, model, sample_batch):
        """classify(g) equals the tail of the full forward."""
        out = model(sample_batch.points, sample_batch.grouping)
        torch.testing.assert_close(model.classify(out.tokens).logits, out.logits)

    def test_rejects_channel_mismatch(self, model, sample_batch):
        """Points with unexpected feature channels are rejected."""
        extra = torch.cat([sample_batch.points, sample_batch.points[..., :1]], dim=-1)
        with pytest.raises(ValueError, match="feature channels"):
            model(extra, sample_batch.grouping)

    def test_rejects_batch_mismatch(self, model, sample_batch):
        """Grouping and points must describe the same batch."""
        with pytest.raises(ValueError, match="batch"):
            model(sample_batch.points[:2], sample_batch.grouping)

    def test_feature_channels(self, sample_batch, tiny_backbone):
        """in_channels > 0 consumes per-point features."""
        cfg = replace(tiny_backbone, in_channels=2)
        model = DestFormer(cfg)
        points = torch.cat([sample_batch.points, torch.ones(*sample_batch.points.shape[:3], 2)], -1)
        out = model(points, sample_batch.grouping)
        assert out.logits.shape == (8, cfg.num_classes)


class TestStageSymmetries:
    def test_p4conv_ignores_neighbor_order(self, model, sample_batch):
        """Shuffling each neighborhood along K leaves the local features unchanged."""
        grouping = sample_batch.grouping
        generator = torch.Generator().manual_seed(2)
        perm = torch.randperm(grouping.neighbor_index.shape[-1], generator=generator)
        shuffled = GroupingBatch(
            grouping.anchor_index,
            grouping.neighbor_index[..., perm],
            grouping.neighbor_dt[..., perm],
        )
        torch.testing.assert_close(
            p4conv_forward(model, sample_batch.points, shuffled),
            p4conv_forward(model, sample_batch.points, grouping),
        )

    def test_p4conv_repeated_neighbor(self, model):
        """A neighborhood of one repeated point embeds like that point alone, at any anchor copy."""
        points = torch.randn(1, 2, 4, 3, generator=torch.Generator().manual_seed(4))
        anchor_index = torch.tensor([[[1, 1]]])

        def grouping(k):
            return GroupingBatch(
                anchor_index, torch.full((1, 1, 2, k), 6), torch.full((1, 1, 2, k), 1.0)
            )

        repeated = p4conv_forward(model, points, grouping(4))
        single = p4conv_forward(model, points, grouping(1))
        torch.testing.assert_close(repeated, single)
        torch.testing.assert_close(repeated[0, 0, 0], repeated[0, 0, 1])

    def test_spatial_transformer_is_anchor_equivariant(self, model):
        """Permuting the anchors of every segment permutes the merged features the same way."""
        local = torch.randn(2, 3, 5, model.cfg.feature_dim)
        perm = torch.tensor([4, 2, 0, 3, 1])
        merged = spatial_transformer_forward(model, local)
        permuted = spatial_transformer_forward(model, local[:, :, perm])
        torch.testing.assert_close(permuted, merged[:, :, perm])

    def test_spatial_pool_is_channelwise_max(self):
        """Anchors (1, -2) and (0, 5) pool to (1, 5)."""
        merged = torch.tensor([[[[1.0, -2.0], [0.0, 5.0]]]])
        assert spatial_pool(merged).tolist() == [[[1.0, 5.0]]]

    def test_prediction_head_ignores_token_order(self, model):
        """Feature and logits depend on the set of tokens, not their order."""
        nn.init.normal_(model.head.fc2.weight, std=0.5)
        latent = torch.randn(2, 5, model.cfg.feature_dim)
        perm = torch.tensor([2, 4, 1, 0, 3])
        feature, dist = prediction_head(model, latent)
        shuffled_feature, shuffled_dist = prediction_head(model, latent[:, perm])
        torch.testing.assert_close(shuffled_feature, feature)
        torch.testing.assert_close(shuffled_dist.logits, dist.logits)
        assert dist.logits.abs().max() > 0

    def test_batch_items_are_independent(self, model, sample_batch):
        """Each item's output matches a batch of one, and editing one item leaves the rest alone."""
        nn.init.normal_(model.head.fc2.weight, std=0.5)
        tokens, dist = destformer_forward(model, sample_batch.points, sample_batch.grouping)
        for i in (0, 5):
            item = slice(i, i + 1)
            alone, alone_dist = destformer_forward(
                model, sample_batch.points[item], sample_batch.grouping.select(item)
            )
            torch.testing.assert_close(alone, tokens[item])
            torch.testing.assert_close(alone_dist.logits, dist.logits[item])

        edited = sample_batch.points.clone()
        edited[0] += 1.0
        _, edited_dist = destformer_forward(model, edited, sample_batch.grouping)
        torch.testing.assert_close(edited_dist.logits[1:], dist.logits[1:])
        assert not torch.allclose(edited_dist.logits[0], dist.logits[0])


class TestTemporalEncoderValues:
    def test_two_token_single_head(self, tiny_backbone):
        """One block with identity projections and a silent MLP, against hand-computed attention."""
        model = DestFormer(replace(tiny_backbone, feature_dim=4, heads=1)).double()
        block = model.temporal_encoder.blocks[0]
        with torch.no_grad():
            block.norm1.eps = 0.0
            block.attn.qkv.weight.copy_(torch.eye(4).repeat(3, 1))
            block.attn.qkv.bias.zero_()
            block.attn.proj.weight.copy_(torch.eye(4))
            block.attn.proj.bias.zero_()
            block.mlp.fc2.weight.zero_()
            block.mlp.fc2.bias.zero_()

        # orthogonal zero-mean unit-variance tokens: scores [[2, 0], [0, 2]]
        # and 2 * sigmoid(2) = 1 + tanh(1)
        tokens = torch.tensor(
            [[[1.0, -1.0, 1.0, -1.0], [1.0, 1.0, -1.0, -1.0]]], dtype=torch.float64
        )
        c = 1.0 + math.tanh(1.0)
        expected = torch.tensor([[[2.0, -c, c, -2.0], [2.0, c, -c, -2.0]]], dtype=torch.float64)
        torch.testing.assert_close(temporal_encoder_forward(model, tokens), expected)
