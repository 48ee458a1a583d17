"""
Invariant continuous-filter message passing (SchNet configuration).

Graphs connect every atom pair within the cutoff. Each interaction block
adds a message sum to the node state; the graph vector is a gated sum over
the final node states.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from xchem.config import EncoderConfig
from xchem.errors import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass
class MolecularGraph:
    atomic_numbers: torch.Tensor  # (n,) long
    positions: torch.Tensor  # (n, 3)
    edge_index: torch.Tensor  # (2, E) long; row 0 receives, row 1 sends
    distances: torch.Tensor  # (E,)

    @property
    def num_atoms(self):
        return self.atomic_numbers.shape[0]

    @property
    def num_edges(self):
        return self.edge_index.shape[1]


@dataclass
class GraphBatch:
    atomic_numbers: torch.Tensor
    positions: torch.Tensor
    edge_index: torch.Tensor
    distances: torch.Tensor
    graph_index: torch.Tensor  # (N,) graph of each node
    num_graphs: int


def build_graph(molecule, cutoff, dtype=torch.float64):
    '''
    Every ordered pair (i, j) with 0 < |r_i - r_j| <= cutoff, both
    directions. Coincident atoms get no edge.
    '''
    numbers = molecule.atomic_numbers
    if len(numbers) < 1:
        raise ValueError('a molecular graph needs at least one atom')
    pos = torch.as_tensor(molecule.position_array())
    dist = torch.cdist(pos, pos)
    mask = (dist > 0) & (dist <= cutoff)
    edge_index = mask.nonzero(as_tuple=False).t().contiguous()
    receivers, senders = edge_index
    distances = (pos[receivers] - pos[senders]).norm(dim=-1)
    return MolecularGraph(
        atomic_numbers=torch.as_tensor(list(numbers), dtype=torch.long),
        positions=pos.to(dtype),
        edge_index=edge_index,
        distances=distances.to(dtype),
    )


def collate(graphs):
    '''Join graphs into one disconnected graph; node indices are offset per graph.'''
    graphs = list(graphs)
    if not graphs:
        raise ValueError('cannot collate an empty list of graphs')
    offsets = np.cumsum([0] + [g.num_atoms for g in graphs[:-1]])
    return GraphBatch(
        atomic_numbers=torch.cat([g.atomic_numbers for g in graphs]),
        positions=torch.cat([g.positions for g in graphs]),
        edge_index=torch.cat([g.edge_index + int(o) for g, o in zip(graphs, offsets)], dim=1),
        distances=torch.cat([g.distances for g in graphs]),
        graph_index=torch.cat([torch.full((g.num_atoms,), i, dtype=torch.long) for i, g in enumerate(graphs)]),
        num_graphs=len(graphs),
    )


#### radial basis ####

def gaussian_centers(n_radial, cutoff):
    '''Evenly spaced on (0, cutoff]; the spacing is also the width.'''
    spacing = cutoff / n_radial
    return torch.linspace(spacing, cutoff, n_radial, dtype=torch.float64), spacing


def cosine_cutoff(distances, cutoff):
    return torch.where(distances <= cutoff, 0.5 * (torch.cos(math.pi * distances / cutoff) + 1.0),
                       torch.zeros_like(distances))


class RadialBasis(nn.Module):
    def __init__(self, n_radial, cutoff, kind='gaussian'):
        super().__init__()
        if kind not in ('gaussian', 'bessel'):
            raise ConfigurationError('unknown radial basis {0!r}'.format(kind))
        self.kind = kind
        self.cutoff = cutoff
        self.n_radial = n_radial
        if kind == 'gaussian':
            centers, width = gaussian_centers(n_radial, cutoff)
            self.register_buffer('centers', centers)
            self.width = width
        else:
            self.register_buffer('frequencies', torch.arange(1, n_radial + 1, dtype=torch.float64) * math.pi / cutoff)

    def forward(self, distances):
        d = distances.unsqueeze(-1)
        if self.kind == 'gaussian':
            centers = self.centers.to(d.dtype)
            return torch.exp(-0.5 * ((d - centers) / self.width) ** 2)
        return torch.sin(self.frequencies.to(d.dtype) * d) / d


def radial_expand(distances, config):
    '''
    Expand distances (Å) on the configured basis.

    Raises: ValueError for non-positive distances
    '''
    distances = torch.as_tensor(distances, dtype=torch.float64)
    if bool((distances <= 0).any()):
        raise ValueError('radial expansion is defined for positive distances only')
    return RadialBasis(config.n_radial, config.cutoff, config.basis)(distances)


#### network ####

def shifted_softplus(x):
    # zero at zero
    return nn.functional.softplus(x) - math.log(2.0)


class ShiftedSoftplus(nn.Module):
    def forward(self, x):
        return shifted_softplus(x)


def _uniform_(linear):
    bound = linear.in_features ** -0.5
    nn.init.uniform_(linear.weight, -bound, bound)
    if linear.bias is not None:
        nn.init.uniform_(linear.bias, -bound, bound)


class InteractionBlock(nn.Module):
    '''
    m_ij = x_j * W(d_ij) * cutoff(d_ij) with x = in2f(h); the update
    layers carry no bias, so a zero filter gives a zero update.
    '''

    def __init__(self, hidden_dim, n_radial, cutoff):
        super().__init__()
        self.cutoff = cutoff
        self.filter_network = nn.Sequential(
            nn.Linear(n_radial, hidden_dim),
            ShiftedSoftplus(),
            nn.Linear(hidden_dim, hidden_dim),
        )
        self.in2f = nn.Linear(hidden_dim, hidden_dim, bias=False)
        self.f2out = nn.Linear(hidden_dim, hidden_dim, bias=False)
        self.dense = nn.Linear(hidden_dim, hidden_dim, bias=False)

    def forward(self, h, edge_index, distances, expanded):
        receivers, senders = edge_index
        filters = self.filter_network(expanded) * cosine_cutoff(distances, self.cutoff).unsqueeze(-1)
        messages = self.in2f(h)[senders] * filters
        aggregated = torch.zeros_like(h).index_add_(0, receivers, messages)
        return self.dense(shifted_softplus(self.f2out(aggregated)))


class SchNetEncoder(nn.Module):
    def __init__(self, config=None):
        super().__init__()
        config = config or EncoderConfig()
        self.config = config
        self.elements = tuple(config.elements)
        lookup = torch.full((max(self.elements) + 1,), -1, dtype=torch.long)
        for position, z in enumerate(self.elements):
            lookup[z] = position
        self.register_buffer('element_lookup', lookup)

        self.embedding = nn.Linear(len(self.elements), config.hidden_dim, bias=False)
        self.radial = RadialBasis(config.n_radial, config.cutoff, config.basis)
        self.interactions = nn.ModuleList(
            InteractionBlock(config.hidden_dim, config.n_radial, config.cutoff)
            for _ in range(config.interaction_blocks))
        self.gate = nn.Linear(config.hidden_dim, config.hidden_dim)
        self.reset_parameters()

    @property
    def out_dim(self):
        return self.config.hidden_dim

    def reset_parameters(self):
        for module in self.modules():
            if isinstance(module, nn.Linear):
                _uniform_(module)
        nn.init.zeros_(self.gate.bias)

    def one_hot(self, atomic_numbers):
        unsupported = sorted({int(z) for z in atomic_numbers.tolist()
                              if z >= len(self.element_lookup) or self.element_lookup[z] < 0})
        if unsupported:
            raise ConfigurationError('elements {0} are outside the supported set {1}'.format(
                unsupported, list(self.elements)))
        positions = self.element_lookup[atomic_numbers]
        dtype = self.embedding.weight.dtype
        return nn.functional.one_hot(positions, len(self.elements)).to(dtype)

    def node_features(self, batch):
        '''h^(T) for every node of a GraphBatch.'''
        dtype = self.embedding.weight.dtype
        h = self.embedding(self.one_hot(batch.atomic_numbers))
        distances = batch.distances.to(dtype)
        expanded = self.radial(distances)
        for interaction in self.interactions:
            h = h + interaction(h, batch.edge_index, distances, expanded)
        return h

    def readout(self, h, graph_index, num_graphs):
        gated = torch.sigmoid(self.gate(h)) * h
        return torch.zeros(num_graphs, h.shape[-1], dtype=h.dtype, device=h.device).index_add_(0, graph_index, gated)

    def forward(self, batch):
        if isinstance(batch, MolecularGraph):
            batch = collate([batch])
        return self.readout(self.node_features(batch), batch.graph_index, batch.num_graphs)

    def encode(self, graph):
        '''Graph vector g of a single MolecularGraph.'''
        return self.forward(graph)[0]
