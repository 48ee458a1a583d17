"""
Command-line entry point: ingest -> embed -> select -> train -> evaluate -> report.

Every phase reads and writes files named in the configuration, so each one
can be re-run on its own.
"""
import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from tqdm import tqdm

from xchem import telemetry
from xchem.agents.dialogue import replay_transcript, run_dialogue
from xchem.agents.store import SelectionStore, TranscriptWriter, read_jsonl
from xchem.commands import Command, CommandManager
from xchem.config import config_hash, load_config
from xchem.dataset import ingest, read_dataset, write_dataset
from xchem.embeddings import embed_selections
from xchem.errors import BackendUnavailableError, DialogueError, PipelineError, XChemError
from xchem.reports import MetricsReport, selection_stats
from xchem.services import init_services, service_manager
from xchem.training import (build_samples, checkpoint_path, evaluate, fold_splits, load_checkpoint, run_folds)

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


class Context:
	def __init__(self, config, args, out=None):
		self.config = config
		self.args = args
		self.out = out or sys.stdout
		self._records = None

	def echo(self, message):
		print(message, file=self.out)

	@property
	def records(self):
		if self._records is None:
			path = self.config.paths.dataset
			if not os.path.exists(path):
				raise XChemError('no dataset at {0}; run the ingest phase first'.format(path))
			self._records = read_dataset(path)
		return self._records

	def services(self):
		if 'embedder' not in service_manager.getNames():
			init_services(self.config)
		return service_manager


def _progress(iterable, total, desc):
	return tqdm(iterable, total=total, desc=desc, disable=None, leave=False)


def _report_failures(context, phase, failed):
	if failed:
		context.echo('{0}: {1} failed: {2}'.format(phase, len(failed), ', '.join(failed)))
		return 1
	return 0


#### phases ####

def cmd_ingest(context):
	args = context.args
	if not args.xyz_dir or not args.metadata:
		raise XChemError('ingest needs --xyz-dir and --metadata')
	result = ingest(args.xyz_dir, args.metadata)
	write_dataset(context.config.paths.dataset, result.retained)
	context._records = None
	context.echo('retained {0}, dropped {1}'.format(len(result.retained), len(result.dropped)))
	return 0


def cmd_embed(context):
	embedder = context.services().get('embedder')
	jobs = context.config.jobs
	failed = []
	for molecule, descriptors in _progress(context.records, len(context.records), 'embed'):
		try:
			embedder.embed_descriptors(descriptors, jobs)
		except BackendUnavailableError as error:
			logger.warning('embedding %s failed: %s', molecule.id, error)
			failed.append(molecule.id)
	context.echo('embedded {0} molecules'.format(len(context.records) - len(failed)))
	return _report_failures(context, 'embed', failed)


def cmd_select(context):
	config = context.config
	services = context.services()
	backends = (services.get('selector'), services.get('validator'))
	rules = services.get('rules')
	store = SelectionStore(config.paths.selections)
	writer = TranscriptWriter(config.paths.transcripts, rules.sha256)

	pending = []
	cached = 0
	for target in config.targets:
		for molecule, descriptors in context.records:
			if (molecule.id, target) in store and not context.args.force:
				cached += 1
				continue
			pending.append((target, molecule, descriptors))

	def dialogue(job):
		target, molecule, descriptors = job
		values = {d.name.value: d.text for d in descriptors} if config.dialogue.condition_on_molecule else None
		try:
			return job, run_dialogue(target, backends, rules, config.dialogue.max_rounds,
			                         molecule=values, molecule_id=molecule.id), None
		except (BackendUnavailableError, DialogueError) as error:
			return job, None, PipelineError(str(error), molecule.id)

	failed = []
	selected = 0
	with ThreadPoolExecutor(max_workers=config.jobs) as pool:
		# map keeps submission order, so the logs are written in a fixed order
		for (target, molecule, _), selection, error in _progress(pool.map(dialogue, pending), len(pending), 'select'):
			if error is not None:
				logger.warning('dialogue for %s/%s failed: %s', error.molecule_id, target.value, error)
				failed.append('{0}/{1}'.format(error.molecule_id, target.value))
				continue
			writer.write(selection)
			store.put(selection)
			selected += 1
	context.echo('selected {0}, cached {1}, failed {2}'.format(selected, cached, len(failed)))
	return _report_failures(context, 'select', failed)


def _variant_samples(context, target):
	'''Samples per variant; with both variants both use the molecules that have a selection.'''
	config = context.config
	variants = config.training.variants
	samples = {}
	if 'fused' in variants:
		selections = SelectionStore(config.paths.selections).for_target(target)
		if not selections:
			raise XChemError('no selections for {0} in {1}; run the select phase first'.format(
				target.value, config.paths.selections))
		embedder = context.services().get('embedder')
		physics = embed_selections(context.records, selections, embedder, config.jobs)
		samples['fused'] = build_samples(context.records, target, config.encoder.cutoff, physics)
	if 'base' in variants:
		base = build_samples(context.records, target, config.encoder.cutoff)
		if 'fused' in samples:
			kept = {s.molecule_id for s in samples['fused']}
			base = [s for s in base if s.molecule_id in kept]
		samples['base'] = base
	return samples


def _finite(values):
	return [v if v != float('inf') else None for v in values]


def cmd_train(context):
	config = context.config
	log = {}
	for target in config.targets:
		for variant, samples in _variant_samples(context, target).items():
			folds = run_folds(samples, target, variant, config.encoder, config.fusion, config.training,
			                  checkpoint_dir=config.paths.checkpoints)
			entries = []
			for fold in folds:
				entry = fold.to_dict()
				entry['val_maes'] = _finite(entry['val_maes'])
				entries.append(entry)
			log.setdefault(target.value, {})[variant] = entries
			context.echo('{0}/{1}: fold MAEs {2}'.format(
				target.value, variant, ', '.join('{0:.4f}'.format(f.mae) for f in folds)))
	_write_json(config.paths.training_log, log)
	return 0


def cmd_evaluate(context):
	config = context.config
	report = MetricsReport()
	backbone = config.encoder.backbone
	hashes = {}
	for target in config.targets:
		for variant, samples in _variant_samples(context, target).items():
			by_id = {s.molecule_id: s for s in samples}
			maes = []
			for fold, (_, _, test_ids) in enumerate(fold_splits(list(by_id), config.training)):
				path = checkpoint_path(config.paths.checkpoints, target, variant, fold)
				if not os.path.exists(path):
					raise XChemError('no checkpoint at {0}; run the train phase first'.format(path))
				model = load_checkpoint(path, config.encoder, config.fusion, target, variant)
				maes.append(evaluate(model, [by_id[i] for i in test_ids]))
			report.add(backbone, target, variant, maes)
			hashes['{0}/{1}'.format(target.value, variant)] = config_hash(config.encoder, config.fusion, target, variant)
			context.echo('{0}/{1}: MAE {2:.4f}'.format(target.value, variant, report.mean(backbone, target, variant)))
	report.provenance = {
		'config': config.to_dict(),
		'config_hashes': hashes,
		'rules_sha256': context.services().get('rules').sha256,
	}
	report.write_json(config.paths.metrics)
	return 0


def cmd_report(context):
	config = context.config
	if not os.path.exists(config.paths.metrics):
		raise XChemError('no metrics at {0}; run the evaluate phase first'.format(config.paths.metrics))
	with open(config.paths.metrics, encoding='utf-8') as f:
		report = MetricsReport.from_dict(json.load(f))
	if context.args.published:
		report.merge(MetricsReport.published())

	reports = config.paths.reports
	report.write_csv(os.path.join(reports, 'mae.csv'))
	report.write_json(os.path.join(reports, 'mae.json'))
	report.write_chart(os.path.join(reports, 'percent_change.png'))

	skipped = []
	selections = replay_transcript(read_jsonl(config.paths.transcripts, skipped), strict=False)
	selection_stats(selections).write_csv(os.path.join(reports, 'selection_stats.csv'))
	if skipped:
		context.echo('skipped {0} malformed transcript lines'.format(len(skipped)))
	context.echo('wrote reports to {0}'.format(reports))
	return 0


def cmd_pipeline(context):
	phases = [cmd_embed, cmd_select, cmd_train, cmd_evaluate, cmd_report]
	if context.args.xyz_dir:
		phases.insert(0, cmd_ingest)
	for phase in phases:
		code = phase(context)
		if code:
			return code
	return 0


def _write_json(path, data):
	directory = os.path.dirname(path)
	if directory:
		os.makedirs(directory, exist_ok=True)
	with open(path, 'w', encoding='utf-8') as f:
		json.dump(data, f, indent=2, sort_keys=True)
		f.write('\n')


cm = CommandManager()
cm.add(Command('ingest', 'parse QM9 XYZ files and join descriptor metadata', cmd_ingest))
cm.add(Command('embed', 'embed every descriptor text into the vector cache', cmd_embed))
cm.add(Command('select', 'run the Selector/Validator dialogue per molecule and target', cmd_select))
cm.add(Command('train', 'train base and fused models on every fold', cmd_train))
cm.add(Command('evaluate', 'test MAE of every fold checkpoint', cmd_evaluate))
cm.add(Command('report', 'write MAE tables, the percent-change chart and selection statistics', cmd_report))
cm.add(Command('pipeline', 'run every phase in order', cmd_pipeline))


def build_parser():
	parser = argparse.ArgumentParser(prog='xchem', description=cm.availableCommands(),
	                                 formatter_class=argparse.RawDescriptionHelpFormatter)
	parser.add_argument('subcommand', help='subcommand to run (see list above)')
	parser.add_argument('--config', help='YAML file merged over the packaged defaults')
	parser.add_argument('--targets', help='comma-separated target properties, e.g. homo,lumo')
	parser.add_argument('--variant', choices=['base', 'fused', 'both'], help='model variants to train')
	parser.add_argument('--backend-url', help='chat and embedding server URL')
	parser.add_argument('--seed', type=int)
	parser.add_argument('--jobs', type=int, help='parallel dialogues / embedding requests')
	parser.add_argument('--force', action='store_true', help='recompute cached selections')
	parser.add_argument('--deterministic', action='store_true', default=None,
	                    help='fixed seeds and serialized data order')
	parser.add_argument('--xyz-dir', help='directory of QM9 .xyz files (ingest)')
	parser.add_argument('--metadata', help='JSON Lines descriptor metadata (ingest)')
	parser.add_argument('--published', action='store_true', help='add published backbone MAEs to the report')
	parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
	return parser


def overrides_from(args):
	overrides = {}
	if args.targets:
		overrides['targets'] = [t.strip() for t in args.targets.split(',') if t.strip()]
	if args.variant:
		overrides['training'] = {'variants': ['base', 'fused'] if args.variant == 'both' else [args.variant]}
	if args.backend_url:
		overrides['backends'] = {'chat_url': args.backend_url, 'embed_url': args.backend_url}
	if args.seed is not None:
		overrides['seed'] = args.seed
	if args.jobs is not None:
		overrides['jobs'] = args.jobs
	if args.deterministic:
		overrides['deterministic'] = True
	return overrides


def main(argv=None, out=None):
	args = build_parser().parse_args(argv)
	logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
	config = None
	try:
		config = load_config(args.config, overrides_from(args))
		service_manager.clear()
		return cm.run(args.subcommand, Context(config, args, out))
	except (XChemError, ValueError) as error:
		print('error: {0}'.format(error), file=sys.stderr)
		return 1
	finally:
		if config is not None and config.paths.metrics_textfile:
			telemetry.export_textfile(config.paths.metrics_textfile)


if __name__ == '__main__':
	sys.exit(main())
