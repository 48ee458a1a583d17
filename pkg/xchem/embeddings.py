"""
Frozen text-encoder vectors for descriptors, a content-addressed disk cache,
and the weighted physics-aware embedding

    t_phys = sum_j w_j * phi_{k_j}
"""
import hashlib
import logging
import os
import re
import tempfile
import threading
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import requests
from schema import Or, Schema, SchemaError

from xchem import telemetry
from xchem.errors import ConfigurationError, MissingEmbeddingError
from xchem.properties import DESCRIPTOR_UNITS, DescriptorKind
from xchem.services.http import post_json

logger = logging.getLogger(__name__)

EMBEDDING_DIM = 768
CACHE_DTYPE = np.dtype('<f4')

EMBED_RESPONSE_SCHEMA = Schema({'vectors': [[Or(int, float)]]}, ignore_extra_keys=True)


def text_hash(text):
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def descriptor_text(record):
    '''"Display Name: value unit", e.g. "Molecular Weight: 46.07 g/mol".'''
    kind = DescriptorKind.parse(record.name)
    value = record.text.strip()
    unit = DESCRIPTOR_UNITS.get(kind)
    if unit and not value.endswith(unit):
        value = '{0} {1}'.format(value, unit)
    return '{0}: {1}'.format(kind.display_name, value)


@dataclass(frozen=True)
class DescriptorEmbedding:
    descriptor_name: str
    text_hash: str
    vector: np.ndarray


@dataclass(frozen=True)
class PhysicsEmbedding:
    vector: np.ndarray
    source_selection: object


#### backends ####

class EmbeddingBackend(ABC):
    dim = EMBEDDING_DIM

    @property
    @abstractmethod
    def backend_id(self):
        '''Identifies model + encoder; part of every cache key.'''

    @abstractmethod
    def embed_batch(self, texts):
        '''Return one vector per text as a (len(texts), dim) array.'''


class HashingEmbeddingBackend(EmbeddingBackend):
    '''
    Deterministic offline stand-in: each text seeds a generator through its
    SHA-256, giving unit-scale Gaussian vectors. Distinct texts get
    unrelated vectors.
    '''

    def __init__(self, dim=EMBEDDING_DIM, salt='xchem'):
        self.dim = dim
        self.salt = salt

    @property
    def backend_id(self):
        return 'hashing-{0}-{1}'.format(self.salt, self.dim)

    def vector(self, text):
        seed = int.from_bytes(hashlib.sha256((self.salt + '\0' + text).encode('utf-8')).digest()[:8], 'little')
        rng = np.random.default_rng(seed)
        return rng.standard_normal(self.dim) / np.sqrt(self.dim)

    def embed_batch(self, texts):
        return np.stack([self.vector(t) for t in texts]) if texts else np.zeros((0, self.dim))


class HttpEmbeddingBackend(EmbeddingBackend):
    '''JSON over HTTP: POST {model, input: [str]} -> {vectors: [[float]]}.'''

    def __init__(self, url, model, dim=EMBEDDING_DIM, timeout=120.0, retries=3, session=None):
        self.url = url.rstrip('/')
        self.model = model
        self.dim = dim
        self.timeout = timeout
        self.retries = retries
        self.session = session or requests.Session()

    @property
    def backend_id(self):
        return 'http-{0}'.format(self.model)

    def embed_batch(self, texts):
        data = post_json(self.session, self.url + '/api/embed', {'model': self.model, 'input': list(texts)},
                         self.timeout, self.retries, backend='embed')
        try:
            data = EMBED_RESPONSE_SCHEMA.validate(data)
        except SchemaError as error:
            raise ConfigurationError('malformed embedding response: {0}'.format(error))
        vectors = np.asarray(data['vectors'], dtype=np.float64)
        if vectors.shape[0] != len(texts):
            raise ConfigurationError('embedding backend returned {0} vectors for {1} texts'.format(
                vectors.shape[0], len(texts)))
        return vectors


class ClipEmbeddingBackend(EmbeddingBackend):
    '''Frozen CLIP text tower loaded locally with transformers.'''

    def __init__(self, model='openai/clip-vit-large-patch14', device='cpu'):
        self.model_name = model
        self.device = device
        self._model = None
        self._tokenizer = None
        self._lock = threading.Lock()

    @property
    def backend_id(self):
        return 'clip-{0}'.format(self.model_name)

    def _load(self):
        with self._lock:
            if self._model is None:
                from transformers import CLIPModel, CLIPTokenizer
                self._tokenizer = CLIPTokenizer.from_pretrained(self.model_name)
                self._model = CLIPModel.from_pretrained(self.model_name).to(self.device).eval()
        return self._model, self._tokenizer

    def embed_batch(self, texts):
        import torch
        model, tokenizer = self._load()
        inputs = tokenizer(list(texts), padding=True, truncation=True, return_tensors='pt').to(self.device)
        with torch.no_grad():
            features = model.get_text_features(**inputs)
        return features.cpu().double().numpy()


def make_embedding_backend(config):
    '''Build the backend named by `config.backends.embedding`.'''
    settings = config.backends.embedding
    if settings.kind == 'hashing':
        return HashingEmbeddingBackend(dim=settings.dim)
    if settings.kind == 'clip':
        return ClipEmbeddingBackend(settings.model)
    return HttpEmbeddingBackend(config.backends.embed_url, settings.model, dim=settings.dim,
                                timeout=config.backends.timeout, retries=config.backends.retries)


#### cache ####

class EmbeddingCache:
    '''
    Vectors stored one file per (backend id, text hash) as little-endian
    float32. Reads need no lock; writes go through one lock and an atomic
    rename so readers never see a partial file.
    '''

    def __init__(self, root):
        self.root = root
        self._write_lock = threading.Lock()

    def _path(self, backend_id, digest):
        slug = re.sub(r'[^A-Za-z0-9._-]+', '_', backend_id)
        return os.path.join(self.root, slug, digest[:2], digest + '.f32')

    def get(self, backend_id, digest):
        path = self._path(backend_id, digest)
        if not os.path.exists(path):
            return None
        return np.fromfile(path, dtype=CACHE_DTYPE)

    def put(self, backend_id, digest, vector):
        data = np.ascontiguousarray(vector, dtype=CACHE_DTYPE)
        path = self._path(backend_id, digest)
        with self._write_lock:
            if os.path.exists(path):
                return
            os.makedirs(os.path.dirname(path), exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), suffix='.tmp')
            with os.fdopen(fd, 'wb') as f:
                f.write(data.tobytes())
            os.replace(tmp, path)


class DescriptorEmbedder:
    '''
    embed_text() front end: cache lookup, backend call on a miss, dimension
    check, then the cached float32 copy is returned so hits and misses give
    identical bits.
    '''

    def __init__(self, backend, cache, dim=EMBEDDING_DIM):
        self.backend = backend
        self.cache = cache
        self.dim = dim

    def embed_text(self, text):
        if not text or not text.strip():
            raise ValueError('cannot embed empty text')
        digest = text_hash(text)
        backend_id = self.backend.backend_id
        cached = self.cache.get(backend_id, digest)
        if cached is not None:
            telemetry.embedding_cache.labels(result='hit').inc()
            if cached.shape != (self.dim,):
                raise ConfigurationError('cached vector for {0} has {1} dims, expected {2}'.format(
                    digest[:12], cached.shape[0], self.dim))
            return cached
        telemetry.embedding_cache.labels(result='miss').inc()
        vectors = np.asarray(self.backend.embed_batch([text]))
        if vectors.ndim != 2 or vectors.shape[1] != self.dim:
            raise ConfigurationError('backend {0} returned {1}-dimensional vectors, expected {2}'.format(
                backend_id, vectors.shape[-1], self.dim))
        if not np.all(np.isfinite(vectors)):
            raise ConfigurationError('backend {0} returned non-finite values'.format(backend_id))
        self.cache.put(backend_id, digest, vectors[0])
        return self.cache.get(backend_id, digest)

    def embed_descriptor(self, record):
        text = descriptor_text(record)
        return DescriptorEmbedding(DescriptorKind.parse(record.name).value, text_hash(text), self.embed_text(text))

    def embed_descriptors(self, records, jobs=1):
        '''One molecule's bank as {descriptor name: DescriptorEmbedding}.'''
        records = list(records)
        if jobs > 1 and len(records) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                embedded = list(pool.map(self.embed_descriptor, records))
        else:
            embedded = [self.embed_descriptor(r) for r in records]
        return {e.descriptor_name: e for e in embedded}


def physics_embedding(selection, bank):
    '''
    Weighted sum of the selected descriptor vectors; no normalization beyond
    the weights themselves.

    Params:
        selection: AcceptedSelection (or anything with .subset and .weights)
        bank: mapping descriptor name -> DescriptorEmbedding

    Returns: PhysicsEmbedding with a float64 vector
    '''
    vectors = []
    for name in selection.subset:
        if name not in bank:
            raise MissingEmbeddingError(name)
        vectors.append(np.asarray(bank[name].vector, dtype=np.float64))
    weights = np.asarray(selection.weights, dtype=np.float64)
    vector = weights @ np.stack(vectors)
    return PhysicsEmbedding(vector, selection)


def embed_selections(records, selections, embedder, jobs=1):
    '''
    Physics embeddings for every molecule that has an accepted selection.

    Params:
        records: [(Molecule, [DescriptorRecord])]
        selections: mapping molecule id -> AcceptedSelection for one target

    Returns: {molecule id: float64 vector}
    '''
    physics = {}
    for molecule, descriptors in records:
        selection = selections.get(molecule.id)
        if selection is None:
            continue
        wanted = [d for d in descriptors if d.name.value in selection.subset]
        bank = embedder.embed_descriptors(wanted, jobs)
        physics[molecule.id] = physics_embedding(selection, bank).vector
    return physics
