import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional

from aligner.container import audit_container, read_container, write_container
from aligner.dataset import DatasetSplit, build_dataset
from config.settings import ConfigManager
from evalkit.ablation import (
    evaluate_model,
    run_ablation,
    write_loss_csv,
    write_metrics_csv,
    write_predictions_csv,
)
from evalkit.baselines import persistence_baseline, zr_baseline
from evalkit.metrics import compute_metrics
from gridproc.processing import RadarProcessor
from gridproc.volume import read_frame_series, write_frame_series
from m3rnet.checkpoint import load_checkpoint, save_checkpoint
from m3rnet.config import VARIANTS, ModelConfig
from m3rnet.engine import batch_from_sequences
from m3rnet.training import train
from stationproc.pipeline import StationProcessor
from stationproc.series import read_pws_csv
from synth.generator import load_synth_spec, write_synth
from utils.errors import ConfigError, DataError, EmptyDataset, M3RError
from utils.logger import setup_logging
from utils.manifest import report_path, safe_relpath, write_manifest
from utils.plotting import plot_csv
from utils.reporting import public_results, summarize_results

VERSION = '1.0.0'

# report fields that hold file paths; stored relative to the report
REPORT_PATH_KEYS = ('input', 'output', 'checkpoint', 'loss_csv', 'metrics_csv',
                    'predictions_csv', 'radar_dir', 'pws_csv')


class M3RCLI:
    def __init__(self):
        self.config_manager: Optional[ConfigManager] = None
        self.logger = logging.getLogger(__name__)

    def setup_logging(self):
        logging_config = self.config_manager.get_logging_config()
        setup_logging(
            level=logging_config['level'],
            log_file=logging_config['log_file'],
            max_log_size_mb=logging_config['max_log_size_mb'],
            backup_count=logging_config['backup_count'],
        )
        self.logger = logging.getLogger(__name__)

    def _common_parser(self) -> argparse.ArgumentParser:
        # SUPPRESS lets the global flags appear before or after the subcommand
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument('--config', default=argparse.SUPPRESS,
                            help='key=value configuration file (defaults < file < flags)')
        common.add_argument('--seed', type=int, default=argparse.SUPPRESS,
                            help='Random seed for training, shuffling and synthesis')
        common.add_argument('--jobs', type=int, default=argparse.SUPPRESS,
                            help='Worker count for per-file ingest/fill work')
        return common

    def create_parser(self):
        common = self._common_parser()
        parser = argparse.ArgumentParser(
            description='M3R nowcasting - radar and weather-station preprocessing, training and evaluation',
            prog='m3r-nowcast',
            parents=[common],
            epilog='Set M3R_LOG=error|warn|info|debug to control verbosity.',
        )

        parser.add_argument('--version', action='version', version=VERSION)

        subparsers = parser.add_subparsers(dest='command', help='Available commands')

        self._add_ingest_parser(subparsers, common)
        self._add_fill_parser(subparsers, common)
        self._add_align_parser(subparsers, common)
        self._add_synth_parser(subparsers, common)
        self._add_train_parser(subparsers, common)
        self._add_eval_parser(subparsers, common)
        self._add_ablate_parser(subparsers, common)
        self._add_plot_parser(subparsers, common)
        self._add_audit_parser(subparsers, common)
        self._add_config_parser(subparsers, common)

        return parser

    def _add_ingest_parser(self, subparsers, common):
        ingest_parser = subparsers.add_parser('ingest', parents=[common],
                                              help='Composite and regularize a directory of GVOL volumes')
        ingest_parser.add_argument('input', help='Directory of *.gvol files')
        ingest_parser.add_argument('-o', '--output', required=True, help='Output frame store (.m3rf)')
        ingest_parser.add_argument('--target-lat', dest='target_lat', type=float,
                                   help='Station latitude (default: grid centre)')
        ingest_parser.add_argument('--target-lon', dest='target_lon', type=float,
                                   help='Station longitude (default: grid centre)')
        ingest_parser.add_argument('--roi-size', dest='roi_size', type=int,
                                   help='ROI edge length in cells (default: 100)')
        ingest_parser.add_argument('--step-seconds', dest='step_seconds', type=int,
                                   help='Regular frame interval in seconds (default: 900)')

    def _add_fill_parser(self, subparsers, common):
        fill_parser = subparsers.add_parser('fill', parents=[common],
                                            help='Gap-fill and validate station CSV files')
        fill_parser.add_argument('inputs', nargs='+', help='Station CSV file(s)')
        fill_parser.add_argument('-o', '--output', required=True,
                                 help='Output CSV (single input) or directory')
        fill_parser.add_argument('--window-hours', dest='precip_window_hours', type=float,
                                 help='Rain-context window for precipitation gaps (default: 2.5)')
        fill_parser.add_argument('--no-repair', dest='repair_violations', action='store_const', const=False,
                                 help='Report physical-constraint violations without repairing them')

    def _add_align_parser(self, subparsers, common):
        align_parser = subparsers.add_parser('align', parents=[common],
                                             help='Select events, pair with station rows and split')
        align_parser.add_argument('frames', help='Frame store from ingest (.m3rf)')
        align_parser.add_argument('pws', help='Filled station CSV')
        align_parser.add_argument('-o', '--output', required=True, help='Output dataset (.m3rd)')
        align_parser.add_argument('--threshold', type=float,
                                  help='Event significance threshold in dBZ (default: 3.0)')
        align_parser.add_argument('--tolerance', dest='match_tolerance_seconds', type=int,
                                  help='Max radar/station time offset in seconds (default: 450)')
        align_parser.add_argument('--train-frac', dest='train_frac', type=float,
                                  help='Chronological train fraction (default: 0.85)')

    def _add_synth_parser(self, subparsers, common):
        synth_parser = subparsers.add_parser('synth', parents=[common],
                                             help='Generate a synthetic radar/station corpus')
        synth_parser.add_argument('spec', nargs='?', help='key=value synth spec file (optional)')
        synth_parser.add_argument('-o', '--output', required=True, help='Output directory')
        synth_parser.add_argument('--n-steps', dest='n_steps', type=int, help='Number of radar volumes')
        synth_parser.add_argument('--storm-count', dest='storm_count', type=int, help='Number of storms')
        synth_parser.add_argument('--gap-fraction', dest='gap_fraction', type=float,
                                  help='Fraction of station rows blanked')

    def _add_train_parser(self, subparsers, common):
        train_parser = subparsers.add_parser('train', parents=[common], help='Train a model on a dataset')
        train_parser.add_argument('dataset', help='Dataset from align (.m3rd)')
        train_parser.add_argument('-o', '--output', required=True, help='Output checkpoint (.m3rc)')
        train_parser.add_argument('--variant', choices=VARIANTS, help='Model variant (default: full)')
        train_parser.add_argument('--epochs', type=int, help='Training epochs (default: 200)')
        train_parser.add_argument('--batch-size', dest='batch_size', type=int, help='Batch size (default: 64)')
        train_parser.add_argument('--lr', type=float, help='Base learning rate (default: 1e-3)')
        train_parser.add_argument('--dtype', choices=['float32', 'float64'], help='Numeric precision')

    def _add_eval_parser(self, subparsers, common):
        eval_parser = subparsers.add_parser('eval', parents=[common],
                                            help='Score a checkpoint and baselines on the test split')
        eval_parser.add_argument('dataset', help='Dataset (.m3rd)')
        eval_parser.add_argument('checkpoint', help='Checkpoint (.m3rc)')
        eval_parser.add_argument('-o', '--output', required=True, help='Output metrics CSV')
        eval_parser.add_argument('--predictions', help='Predictions CSV (default: <output>.predictions.csv)')

    def _add_ablate_parser(self, subparsers, common):
        ablate_parser = subparsers.add_parser('ablate', parents=[common],
                                              help='Train and score ts_only, no_decoder and full variants')
        ablate_parser.add_argument('dataset', help='Dataset (.m3rd)')
        ablate_parser.add_argument('-o', '--output', required=True, help='Output metrics CSV')
        ablate_parser.add_argument('--repeats', dest='ablation_repeats', type=int,
                                   help='Seeds averaged per variant (default: 1)')
        ablate_parser.add_argument('--epochs', type=int, help='Training epochs (default: 200)')

    def _add_plot_parser(self, subparsers, common):
        plot_parser = subparsers.add_parser('plot', parents=[common],
                                            help='Render a loss, predictions or metrics CSV as SVG')
        plot_parser.add_argument('csv', help='CSV written by train, eval or ablate')
        plot_parser.add_argument('-o', '--output', required=True, help='Output SVG file')

    def _add_audit_parser(self, subparsers, common):
        audit_parser = subparsers.add_parser('audit', parents=[common],
                                             help='Check alignment tolerance and split of datasets')
        audit_parser.add_argument('datasets', nargs='+', help='Dataset file(s) (.m3rd)')
        audit_parser.add_argument('--tolerance', dest='match_tolerance_seconds', type=int,
                                  help='Max radar/station time offset in seconds (default: 450)')
        audit_parser.add_argument('-o', '--output', help='Write the audit as JSON')

    def _add_config_parser(self, subparsers, common):
        config_parser = subparsers.add_parser('config', parents=[common], help='Configuration management')
        config_subparsers = config_parser.add_subparsers(dest='config_action')

        config_subparsers.add_parser('show', help='Show the effective configuration')
        config_subparsers.add_parser('validate', help='Validate configuration')

    def load_configuration(self, args):
        self.config_manager = ConfigManager(getattr(args, 'config', None))
        overrides = {
            key: value for key, value in vars(args).items()
            if key in self.config_manager.default_config and value is not None
        }
        self.config_manager.apply_overrides(overrides)

    def _write_report(self, output, payload: Dict[str, Any]) -> str:
        path = report_path(output)
        base = path.parent
        for key in REPORT_PATH_KEYS:
            if key in payload:
                payload[key] = safe_relpath(base, payload[key])
        return write_manifest(path, payload)

    def handle_ingest(self, args):
        cfg = self.config_manager
        cfg.validate_paths([args.input])
        processor = RadarProcessor(
            target_lat=cfg.get('target_lat'),
            target_lon=cfg.get('target_lon'),
            roi_size=cfg.get('roi_size'),
            step_seconds=cfg.get('step_seconds'),
            jobs=cfg.get('jobs'),
        )

        series, results = processor.process_directory(Path(args.input))
        output = write_frame_series(series, args.output)
        self._write_report(args.output, {
            'command': 'ingest',
            'input': str(args.input),
            'output': output,
            'frames': len(series),
            'step_seconds': series.step_seconds,
            'summary': summarize_results(results),
            'files': public_results(results),
        })
        print(f"✓ {len(series)} frame(s) at {series.step_seconds}s -> {output}")

    def handle_fill(self, args):
        cfg = self.config_manager
        inputs = [Path(p) for p in args.inputs]
        cfg.validate_paths(inputs)

        output = Path(args.output)
        if len(inputs) == 1 and output.suffix:
            jobs = [(inputs[0], output)]
        else:
            jobs = [(src, output / src.name) for src in inputs]

        processor = StationProcessor(
            precip_window_hours=cfg.get('precip_window_hours'),
            repair=cfg.get('repair_violations'),
            jobs=cfg.get('jobs'),
        )
        results = processor.process_files(jobs)
        for result in results:
            if not result['success']:
                raise result['exception']

        self._write_report(jobs[0][1] if len(jobs) == 1 else output, {
            'command': 'fill',
            'summary': summarize_results(results),
            'files': public_results(results),
        })
        self._print_fill_results(results)

    def handle_align(self, args):
        cfg = self.config_manager
        cfg.validate_paths([args.frames, args.pws])

        frames = read_frame_series(args.frames)
        pws = read_pws_csv(args.pws)
        split = build_dataset(
            frames,
            pws,
            threshold=cfg.get('threshold'),
            train_frac=cfg.get('train_frac'),
            tolerance=cfg.get('match_tolerance_seconds'),
        )
        output = write_container(split, args.output)
        self._write_report(args.output, {
            'command': 'align',
            'output': output,
            'threshold': cfg.get('threshold'),
            'sequences': len(split.sequences),
            'train': len(split.train),
            'test': len(split.test),
            'alignment': split.report.to_dict(),
        })
        print(f"✓ {len(split.sequences)} sequence(s) ({len(split.train)} train / {len(split.test)} test), "
              f"{split.report.dropped} dropped -> {output}")

    def handle_synth(self, args):
        if args.spec:
            self.config_manager.validate_paths([args.spec])
        spec = load_synth_spec(
            args.spec,
            seed=getattr(args, 'seed', None),
            n_steps=args.n_steps,
            storm_count=args.storm_count,
            gap_fraction=args.gap_fraction,
        )
        summary = write_synth(spec, args.output)
        self._write_report(args.output, {'command': 'synth', 'spec': spec.to_dict(), **summary})
        print(f"✓ {summary['volumes']} volume(s), {summary['pws_rows']} station row(s) -> {args.output}")

    def _model_config_for(self, split: DatasetSplit) -> ModelConfig:
        """Configured model shape, with frame size taken from the data unless set explicitly."""
        cfg = self.config_manager
        config = cfg.get_model_config()
        if not split.sequences:
            return config
        ny, nx = split.sequences[0].frames.shape[1:]
        if (ny, nx) != (config.height, config.width) and cfg.sources['height'] == cfg.sources['width'] == 'default':
            self.logger.info(f"Using dataset frame size {ny}x{nx} for the model")
            config = replace(config, height=int(ny), width=int(nx)).validate()
        return config

    def handle_train(self, args):
        cfg = self.config_manager
        cfg.validate_paths([args.dataset])

        split = read_container(args.dataset)
        config = self._model_config_for(split)
        hyper = cfg.get_train_hyper()
        result = train(split, config, hyper)

        output = save_checkpoint(result.model, result.standardizer, args.output)
        loss_csv = write_loss_csv(result.history, Path(args.output).with_suffix('.loss.csv'))
        self._write_report(args.output, {
            'command': 'train',
            'checkpoint': output,
            'loss_csv': loss_csv,
            'model': config.to_dict(),
            'train_sequences': len(split.train),
            'first_loss': result.history[0]['loss'],
            'final_loss': result.final_loss,
        })
        print(f"✓ Trained {config.variant} for {hyper.epochs} epoch(s), final loss {result.final_loss:.4f} -> {output}")

    def handle_eval(self, args):
        cfg = self.config_manager
        cfg.validate_paths([args.dataset, args.checkpoint])

        split = read_container(args.dataset)
        model, standardizer = load_checkpoint(args.checkpoint)
        sequences = split.test
        if not sequences:
            self.logger.warning("Dataset has no test split; scoring every sequence")
            sequences = split.sequences
        if not sequences:
            raise EmptyDataset("Dataset holds no sequences", path=args.dataset)

        report, predictions, actual = evaluate_model(model, standardizer, sequences)
        batch = batch_from_sequences(sequences, model.config, standardizer)
        reports = {
            model.config.variant: report,
            'persistence': compute_metrics(persistence_baseline(batch, standardizer), actual),
            'zr': compute_metrics(zr_baseline(batch, a=cfg.get('zr_a'), b=cfg.get('zr_b')), actual),
        }

        output = write_metrics_csv(reports, args.output)
        predictions_path = args.predictions or Path(args.output).with_suffix('.predictions.csv')
        write_predictions_csv(predictions, actual, predictions_path)
        self._write_report(args.output, {
            'command': 'eval',
            'metrics_csv': output,
            'predictions_csv': str(predictions_path),
            'sequences': len(sequences),
        })
        self._print_metrics(reports)

    def handle_ablate(self, args):
        cfg = self.config_manager
        cfg.validate_paths([args.dataset])

        split = read_container(args.dataset)
        reports = run_ablation(split, self._model_config_for(split), cfg.get_train_hyper(),
                               repeats=cfg.get('ablation_repeats'))
        output = write_metrics_csv(reports, args.output)
        self._write_report(args.output, {
            'command': 'ablate',
            'metrics_csv': output,
            'repeats': cfg.get('ablation_repeats'),
            'variants': list(reports),
        })
        self._print_metrics(reports)

    def handle_plot(self, args):
        self.config_manager.validate_paths([args.csv])
        output = plot_csv(args.csv, args.output)
        print(f"✓ Chart written to {output}")

    def handle_audit(self, args) -> int:
        cfg = self.config_manager
        cfg.validate_paths(args.datasets)

        audits = [audit_container(path, cfg.get('match_tolerance_seconds')) for path in args.datasets]
        if args.output:
            write_manifest(args.output, {'command': 'audit', 'datasets': audits})
        for audit in audits:
            mark = '✓' if audit['ok'] else '✗'
            print(f"{mark} {audit['path']}: {audit['sequences']} sequence(s), "
                  f"max |dt| {audit['max_time_offset']}s, {audit['train']} train / {audit['test']} test")
            for issue in audit['issues']:
                print(f"    {issue}")
        return 0 if all(a['ok'] for a in audits) else DataError.exit_code

    def handle_config(self, args) -> int:
        if args.config_action == 'show':
            print(self.config_manager.to_text(), end='')
        elif args.config_action == 'validate':
            issues = self.config_manager.validate_config()
            self._print_validation_results(issues)
            if issues['errors']:
                return ConfigError.exit_code
        else:
            print("Use 'config show' or 'config validate'")
        return 0

    def _print_fill_results(self, results: List[dict]):
        successful = sum(1 for r in results if r.get('success'))
        print(f"\nFill Results: {successful}/{len(results)} successful")
        for result in results:
            violations = sum(result.get('violations', {}).values())
            print(f"✓ {result['path']} -> {result['output']} "
                  f"({result['gaps_filled']} gap(s) filled, {violations} violation(s))")

    def _print_metrics(self, reports):
        print(f"\n{'model':<12} {'rmse':>8} {'mae':>8} {'r2':>8} {'cc':>8}")
        for name, report in reports.items():
            print(f"{name:<12} {report.rmse:>8.4f} {report.mae:>8.4f} {report.r2:>8.4f} {report.cc:>8.4f}")

    def _print_validation_results(self, issues: dict):
        if issues['errors']:
            print("Configuration Errors:")
            for error in issues['errors']:
                print(f"  ✗ {error}")

        if issues['warnings']:
            print("\nConfiguration Warnings:")
            for warning in issues['warnings']:
                print(f"  ⚠ {warning}")

        if not issues['errors'] and not issues['warnings']:
            print("Configuration is valid ✓")

    def run(self, args: Optional[List[str]] = None) -> int:
        parser = self.create_parser()
        parsed_args = parser.parse_args(args)

        if not parsed_args.command:
            parser.print_help()
            return 0

        handlers = {
            'ingest': self.handle_ingest,
            'fill': self.handle_fill,
            'align': self.handle_align,
            'synth': self.handle_synth,
            'train': self.handle_train,
            'eval': self.handle_eval,
            'ablate': self.handle_ablate,
            'plot': self.handle_plot,
            'audit': self.handle_audit,
            'config': self.handle_config,
        }

        try:
            self.load_configuration(parsed_args)
            self.setup_logging()
            return handlers[parsed_args.command](parsed_args) or 0
        except M3RError as e:
            self.logger.debug("Command failed", exc_info=True)
            print(f"Error: {e}", file=sys.stderr)
            return e.exit_code
        except KeyboardInterrupt:
            print("\nOperation cancelled by user", file=sys.stderr)
            return 130
        except OSError as e:
            self.logger.error(f"I/O error: {e}")
            print(f"Error: {e}", file=sys.stderr)
            return 2
        except Exception as e:
            self.logger.exception(f"Unexpected error: {str(e)}")
            print(f"Error: {str(e)}", file=sys.stderr)
            return 1
