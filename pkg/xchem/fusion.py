"""
Late fusion of the graph vector with the physics-vetted text embedding.

    t_p = P t_phys                 two-layer projection to d
    g~  = LN(W_g g),  t~ = LN(W_t t_p)
    z   = sigmoid(W [g~ || t~] + b)
    f   = z * g~ + (1 - z) * t~
    y   = head(f)

The `base` variant has no text branch: f = LN(W_g g).
"""
import logging
from dataclasses import dataclass

import torch
from torch import nn

from xchem.config import FusionConfig
from xchem.encoder import ShiftedSoftplus
from xchem.errors import ConfigurationError
from xchem.properties import TargetProperty

logger = logging.getLogger(__name__)

VARIANTS = ('base', 'fused')


@dataclass(frozen=True)
class Prediction:
    value: float
    target: TargetProperty


def _activation(name):
    if name == 'relu':
        return nn.ReLU()
    if name == 'identity':
        return nn.Identity()
    raise ConfigurationError('unknown projection activation {0!r}'.format(name))


class FusionHead(nn.Module):
    def __init__(self, config=None, graph_dim=128, variant='fused'):
        super().__init__()
        if variant not in VARIANTS:
            raise ConfigurationError('unknown variant {0!r}; expected one of {1}'.format(variant, VARIANTS))
        config = config or FusionConfig()
        self.config = config
        self.variant = variant
        self.graph_dim = graph_dim
        d = config.latent_dim

        self.graph_projection = nn.Linear(graph_dim, d, bias=False)
        self.graph_norm = nn.LayerNorm(d, eps=config.ln_eps)
        if variant == 'fused':
            self.text_projection = nn.Sequential(
                nn.Linear(config.text_dim, config.projection_hidden),
                _activation(config.projection_activation),
                nn.Linear(config.projection_hidden, d),
            )
            self.text_transform = nn.Linear(d, d, bias=False)
            self.text_norm = nn.LayerNorm(d, eps=config.ln_eps)
            self.gate = nn.Linear(2 * d, d)
        if config.head == 'mlp':
            self.head = nn.Sequential(nn.Linear(d, d), ShiftedSoftplus(), nn.Linear(d, 1))
        elif config.head == 'linear':
            self.head = nn.Linear(d, 1)
        else:
            raise ConfigurationError('unknown head {0!r}'.format(config.head))

    @property
    def fused(self):
        return self.variant == 'fused'

    def project_text(self, t_phys):
        if t_phys.shape[-1] != self.config.text_dim:
            raise ConfigurationError('text embedding has {0} dims, expected {1}'.format(
                t_phys.shape[-1], self.config.text_dim))
        return self.text_projection(t_phys)

    def _branches(self, g, t_p):
        if g.shape[-1] != self.graph_dim:
            raise ConfigurationError('graph vector has {0} dims, expected {1}'.format(g.shape[-1], self.graph_dim))
        if t_p.shape[-1] != self.config.latent_dim:
            raise ConfigurationError('projected text has {0} dims, expected {1}'.format(
                t_p.shape[-1], self.config.latent_dim))
        return self.graph_norm(self.graph_projection(g)), self.text_norm(self.text_transform(t_p))

    def gate_values(self, g, t_p):
        g_tilde, t_tilde = self._branches(g, t_p)
        return torch.sigmoid(self.gate(torch.cat([g_tilde, t_tilde], dim=-1)))

    def fuse(self, g, t_p):
        g_tilde, t_tilde = self._branches(g, t_p)
        z = torch.sigmoid(self.gate(torch.cat([g_tilde, t_tilde], dim=-1)))
        return z * g_tilde + (1 - z) * t_tilde

    def predict(self, f):
        return self.head(f).squeeze(-1)

    def forward(self, g, t_phys=None):
        if not self.fused:
            return self.predict(self.graph_norm(self.graph_projection(g)))
        if t_phys is None:
            raise ConfigurationError('the fused head needs a physics embedding')
        return self.predict(self.fuse(g, self.project_text(t_phys)))


class PropertyModel(nn.Module):
    '''
    Encoder plus head for one target. Outputs are standardized during
    training; `predict` maps them back to target units.
    '''

    def __init__(self, encoder, head, target, mean=0.0, std=1.0):
        super().__init__()
        if std <= 0:
            raise ValueError('target std must be positive')
        self.encoder = encoder
        self.head = head
        self.target = TargetProperty.parse(target)
        self.mean = float(mean)
        self.std = float(std)

    @property
    def variant(self):
        return self.head.variant

    def forward(self, batch, t_phys=None):
        return self.head(self.encoder(batch), t_phys)

    def destandardize(self, outputs):
        return outputs.double() * self.std + self.mean

    @torch.no_grad()
    def predict(self, batch, t_phys=None):
        values = self.destandardize(self.forward(batch, t_phys))
        return [Prediction(float(v), self.target) for v in values.tolist()]
