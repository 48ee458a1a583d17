import logging

from xchem.services import service_manager

logger = logging.getLogger(__name__)


def init_services(config):
	'''
	Register the backends a command talks to: `selector`, `validator`,
	`embedder` and `rules`.
	'''
	from xchem.agents.backends import make_chat_backends
	from xchem.embeddings import DescriptorEmbedder, EmbeddingCache, make_embedding_backend
	from xchem.physics_rules import RuleRegistry

	selector, validator = make_chat_backends(config)
	service_manager.set('selector', selector)
	service_manager.set('validator', validator)
	service_manager.set('rules', RuleRegistry.load(config.paths.rules_path))
	embedder = DescriptorEmbedder(make_embedding_backend(config), EmbeddingCache(config.paths.embedding_cache),
	                              dim=config.fusion.text_dim)
	service_manager.set('embedder', embedder)
	logger.debug('services: %s', ', '.join(service_manager.getNames()))
	return service_manager.getAll()
