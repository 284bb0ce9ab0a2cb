#!/usr/bin/env python3
"""
Command-line entry point: train, validate, oracle, sweep and the run ledger
Exit codes: 0 success, 1 failed checks, 2 configuration or data error, 3 divergence
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

import artifacts
from config import RunConfig, build_config, build_problem
from database import Database
from errors import (CheckpointError, ConfigError, DataValidationError, IngestionError, MissingReferenceError,
                    PicardNonConvergence, StructuralError, TrainingDivergence)
from metrics import check_error_bounds, oracle_steps_for
from models import CheckpointModel, ReportModel, RunModel
from problems import ProblemSpec, make_linear_control
from refsolver import dimensional_residual
from trainer import TrainResult, Trainer
from validation import (OracleRun, check_cooling_lag_networks, consistency_sweep, midpoint_network_trace,
                        network_snapshots, nn_error_report, run_oracle, run_suite, truncation_sweep)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED_CHECKS, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3
SNAPSHOT_POINTS = 201
CONTROL_CHECKPOINT = "control/checkpoint_final.csv"
CONFIG_ERRORS = (ConfigError, IngestionError, DataValidationError, CheckpointError,
                 MissingReferenceError, StructuralError, OSError)
RUNTIME_ERRORS = (TrainingDivergence, PicardNonConvergence)


def setup_logging(out_dir: Path, verbose: bool = False):
    out_dir.mkdir(parents=True, exist_ok=True)
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(out_dir / 'vpinn.log'),
            logging.StreamHandler()
        ]
    )


class VPINNApplication:
    """One command invocation against one output directory"""

    def __init__(self, config: RunConfig, command: str):
        self.config = config
        self.command = command
        self.out_dir = Path(config.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config_hash = config.config_hash()
        self.db = Database.for_output_dir(self.out_dir)
        self.run_id = None

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def start(self):
        self.run_id = RunModel.start(self.db, self.command, self.config)

    def finish(self, status: str, message: Optional[str] = None):
        if self.run_id is not None:
            RunModel.finish(self.db, self.run_id, status, message)
        self.db.close()

    # train

    def cmd_train(self) -> int:
        config = self.config
        problem = build_problem(config)
        trainer = Trainer(problem, config)

        try:
            result = trainer.train(
                config.iterations,
                on_checkpoint=self._save_checkpoint,
                on_residuals=lambda it, r: artifacts.write_residuals(
                    self.path(f"residuals_iter{it}.csv"), self.config_hash, r,
                    mode_indices=trainer.form.basis.mode_indices, basis=problem.basis_kind.value),
                track_errors=problem.exact is not None,
            )
        except TrainingDivergence as e:
            logger.error(f"Training diverged: {e}; last checkpoint kept")
            self._write_history(trainer.result, problem)
            self.finish('diverged', str(e))
            return EXIT_DIVERGED

        self._write_history(result, problem)
        final = artifacts.save_checkpoint(self.path("checkpoint_final.csv"), result.state,
                                          self.config_hash, trainer.iteration)
        CheckpointModel.add(self.db, self.run_id, trainer.iteration, str(final), None, is_final=True)

        oracle = run_oracle(problem, config)
        report = nn_error_report(problem, result.state, oracle, config)
        artifacts.write_error_report(self.path("error_report.csv"), self.config_hash, report)
        ReportModel.add(self.db, self.run_id, "error_report", report.summary())
        ReportModel.add(self.db, self.run_id, "coefficient_bounds",
                        {'violations': result.bound_violations}, passed=result.bound_violations == 0)
        print(report.format_summary())

        self._write_snapshots(problem, result, oracle)
        if problem.scaling is not None:
            control_state = self._train_control(problem) if config.with_control else None
            self._write_midpoint(problem, result, oracle, control_state)
            if control_state is not None:
                lag = check_cooling_lag_networks(problem, result.state, control_state)
                ReportModel.add(self.db, self.run_id, lag.name, lag.details, passed=lag.passed)
                log = logger.info if lag.passed else logger.warning
                log(f"{lag.name}: {lag.status} {lag.details}")

        self.finish('finished')
        return EXIT_OK

    def _save_checkpoint(self, iteration: int, state, loss: float):
        path = artifacts.save_checkpoint(self.path(f"checkpoint_iter{iteration}.csv"), state,
                                         self.config_hash, iteration)
        CheckpointModel.add(self.db, self.run_id, iteration, str(path), loss)
        logger.info(f"Checkpoint {path.name} (loss {loss:.6e})")

    def _write_history(self, result: TrainResult, problem: ProblemSpec):
        artifacts.write_loss_history(self.path("loss_history.csv"), self.config_hash, result.records,
                                     coefficient_bound_violations=result.bound_violations)
        if result.bound_violations:
            logger.warning(f"{result.bound_violations} coefficient evaluations left the declared bounds during training")
        artifacts.write_timing(self.path("timing.csv"), self.config_hash, result.records)
        if result.monitor:
            every = self.config.checkpoint_every
            # the lower bound is asserted at checkpoint iterations only
            rows = [(m.iteration, m.loss, m.report.rel_L2, m.report.rel_H10,
                     check_error_bounds(m.report, problem).violations if m.iteration % every == 0 else '')
                    for m in result.monitor]
            artifacts.write_csv(self.path("monitor.csv"), self.config_hash,
                                ['iteration', 'loss', 'rel_L2', 'rel_H10', 'bound_violations'], rows)

    def _write_snapshots(self, problem: ProblemSpec, result: TrainResult, oracle: OracleRun):
        a, b = problem.domain
        x = np.linspace(a, b, SNAPSHOT_POINTS)
        steps = list(self.config.snapshot_steps)
        u, _ = network_snapshots(problem, result.state, x)
        u_nn = u[[n - 1 for n in steps]]
        if problem.exact is not None:
            u_ref = problem.exact(x[None, :], problem.times[[n - 1 for n in steps]][:, None])
        else:
            oracle_steps = oracle_steps_for(problem, oracle.solution)
            u_ref = oracle.solution.at_steps(x, [oracle_steps[n - 1] for n in steps])
        times = [problem.times[n - 1] for n in steps]
        artifacts.write_snapshots(self.path("snapshots.csv"), self.config_hash, steps, times, x, u_nn, u_ref)

    def _train_control(self, problem: ProblemSpec):
        control = make_linear_control(problem)
        logger.info("Training the linear control network")
        result = Trainer(control, self.config).train(self.config.iterations)
        artifacts.save_checkpoint(self.path(CONTROL_CHECKPOINT), result.state,
                                  self.config_hash, self.config.iterations)
        return result.state

    def _write_midpoint(self, problem: ProblemSpec, result: TrainResult, oracle: OracleRun, control_state):
        steps = [0] + oracle_steps_for(problem, oracle.solution)
        columns: Dict[str, np.ndarray] = {
            'n': np.arange(problem.n_time + 1),
            't': np.concatenate([[0.0], problem.times]),
            'tau_s': problem.scaling.to_tau(np.concatenate([[0.0], problem.times])),
            'u_nn': midpoint_network_trace(problem, result.state),
            'u_oracle': oracle.solution.midpoint_trace()[steps],
            'u_control': oracle.control.midpoint_trace()[steps],
        }
        if control_state is not None:
            columns['u_control_nn'] = midpoint_network_trace(make_linear_control(problem), control_state)
        columns['T_nn_c'] = problem.scaling.to_T(columns['u_nn'])
        columns['T_oracle_c'] = problem.scaling.to_T(columns['u_oracle'])
        artifacts.write_midpoint(self.path("midpoint.csv"), self.config_hash, columns)

    # validate

    def cmd_validate(self, checkpoint: Optional[str] = None) -> int:
        config = self.config
        path = self._resolve_checkpoint(checkpoint)
        state, meta = artifacts.load_checkpoint(path)
        if meta.get('config') != self.config_hash:
            logger.warning(f"Checkpoint {path} was written with config {meta.get('config')}, "
                           f"validating with {self.config_hash}")
        problem = build_problem(config)
        if state.out_dim != problem.n_time:
            raise CheckpointError(f"Checkpoint has {state.out_dim} outputs, problem has N_time={problem.n_time}")

        losses = self._read_column("loss_history.csv", "loss")
        results = run_suite(problem, config, state, losses=losses,
                            error_history=self._read_column("monitor.csv", "rel_L2"),
                            trend_losses=self._read_column("monitor.csv", "loss"),
                            control_state=self._load_control(problem))

        passed = all(r.passed for r in results)
        summary = {
            'config_hash': self.config_hash,
            'checkpoint': str(path),
            'passed': passed,
            'checks': [{'name': r.name, 'status': r.status, 'details': r.details} for r in results],
        }
        artifacts.write_json(self.path("validation.json"), summary)
        for r in results:
            ReportModel.add(self.db, self.run_id, r.name, r.details, passed=None if r.status == 'skipped' else r.passed)
        for r in results:
            print(f"  {r.status.upper():8s} {r.name}")
        self.finish('finished' if passed else 'failed')
        return EXIT_OK if passed else EXIT_FAILED_CHECKS

    def _load_control(self, problem: ProblemSpec):
        path = self.path(CONTROL_CHECKPOINT)
        if problem.scaling is None or not path.exists():
            return None
        state, _ = artifacts.load_checkpoint(path)
        if state.out_dim != problem.n_time:
            logger.warning(f"Ignoring control checkpoint {path}: {state.out_dim} outputs, N_time={problem.n_time}")
            return None
        return state

    def _resolve_checkpoint(self, checkpoint: Optional[str]) -> Path:
        if checkpoint:
            return Path(checkpoint)
        record = CheckpointModel.latest(self.db, self.config_hash) or CheckpointModel.latest(self.db)
        if record:
            return Path(record['path'])
        fallback = self.path("checkpoint_final.csv")
        if fallback.exists():
            return fallback
        raise CheckpointError(f"No checkpoint found in {self.out_dir}; pass --checkpoint or run train first")

    def _read_column(self, name: str, column: str) -> List[float]:
        path = self.path(name)
        if not path.exists():
            return []
        _, columns, rows = artifacts.read_csv(path)
        index = columns.index(column)
        return [float(row[index]) for row in rows]

    # oracle

    def cmd_oracle(self) -> int:
        problem = build_problem(self.config)
        oracle = run_oracle(problem, self.config)
        solution = oracle.solution
        artifacts.write_oracle(self.path(f"oracle_{problem.name}.csv"), self.config_hash, solution)
        artifacts.write_picard(self.path("oracle_picard.csv"), self.config_hash, solution)

        summary = {
            'n_cells': solution.grid.n_cells,
            'n_steps': solution.grid.n_steps,
            'picard_max': int(max(solution.picard_iterations)),
            'finite': solution.finite,
        }
        if oracle.error_vs_exact is not None:
            summary['rel_L2_vs_exact'] = oracle.error_vs_exact.rel_L2
            print(f"Oracle vs exact: relative L2 {oracle.error_vs_exact.rel_L2:.4e}")
        if oracle.control is not None:
            artifacts.write_oracle(self.path("oracle_control.csv"), self.config_hash, oracle.control)
            summary['max_gap_to_control'] = float(np.max(np.abs(solution.U - oracle.control.U)))
        if problem.scaling is not None:
            summary['dimensional_residual'] = dimensional_residual(problem, solution)
        ReportModel.add(self.db, self.run_id, "oracle", summary, passed=solution.finite)
        print(f"Picard iterations: max {summary['picard_max']}")
        self.finish('finished')
        return EXIT_OK

    # runs

    def cmd_runs(self, run_id: Optional[int] = None, only: Optional[str] = None) -> int:
        """Print the run ledger, or one run with its checkpoints and reports"""
        if run_id is None:
            runs = RunModel.get_all(self.db, only)
            for run in runs:
                print(f"{run['id']:5d}  {run['command']:9s} {run['problem']:7s} {run['config_hash']}  "
                      f"{run['status']:9s} {run['started_at']}")
            print(f"{len(runs)} runs in {self.db.db_path}")
            self.finish('finished')
            return EXIT_OK

        run = RunModel.get(self.db, run_id)
        if run is None:
            raise ConfigError(f"No run {run_id} in {self.db.db_path}")
        print(f"Run {run['id']}: {run['command']} {run['problem']} config {run['config_hash']} ({run['status']})")
        if run['message']:
            print(f"  {run['message']}")
        for record in CheckpointModel.for_run(self.db, run_id):
            final = " final" if record['is_final'] else ""
            print(f"  checkpoint {record['iteration']:7d} {record['path']}{final}")
        for report in ReportModel.for_run(self.db, run_id):
            status = {None: 'info', 1: 'pass', 0: 'fail'}[report['passed']]
            print(f"  report {report['kind']:22s} {status}")
        self.finish('finished')
        return EXIT_OK

    # sweep

    def cmd_sweep(self) -> int:
        problem = build_problem(self.config)
        dt_sweep = consistency_sweep()
        orders = dt_sweep['orders']
        dt_rows = [(n, dt, norm, orders[i - 1] if i > 0 else '')
                   for i, (n, dt, norm) in enumerate(zip(dt_sweep['n_time'], dt_sweep['dt'],
                                                         dt_sweep['max_dual_norm']))]
        artifacts.write_csv(self.path("sweep_dt.csv"), self.config_hash,
                            ['n_time', 'dt', 'max_dual_norm', 'observed_order'], dt_rows)

        ntest = truncation_sweep(problem, self.config)
        rows = []
        for index, estimates in enumerate(ntest['estimates']):
            for level, row in zip(ntest['levels'], estimates):
                rows.extend((index, n + 1, level, value) for n, value in enumerate(row))
        artifacts.write_csv(self.path("sweep_ntest.csv"), self.config_hash,
                            ['state', 'n', 'n_test', 'dual_norm'], rows)

        orders_ok = all(1.5 <= order <= 2.5 for order in orders)
        passed = orders_ok and ntest['violations'] == 0
        ReportModel.add(self.db, self.run_id, "sweep",
                        {'orders': orders, 'truncation_violations': ntest['violations']}, passed=passed)
        print(f"Observed orders {[round(o, 3) for o in orders]}, truncation violations {ntest['violations']}")
        self.finish('finished' if passed else 'failed')
        return EXIT_OK if passed else EXIT_FAILED_CHECKS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vpinn", description="Time-discrete variational PINN for heat conduction")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--problem', choices=['toy', 'coffee'])
    common.add_argument('--config', help="TOML file with run settings")
    common.add_argument('--out-dir', dest='out_dir')
    common.add_argument('--seed', type=int)
    common.add_argument('--quadrature-seed', dest='quadrature_seed', type=int)
    common.add_argument('--iterations', type=int)
    common.add_argument('--schedule', choices=['constant', 'exponential', 'cosine'])
    common.add_argument('--lr0', type=float)
    common.add_argument('--lr-decay-rate', dest='lr_decay_rate', type=float)
    common.add_argument('--lr-decay-steps', dest='lr_decay_steps', type=int)
    common.add_argument('--hidden-layers', dest='hidden_layers', type=int)
    common.add_argument('--hidden-width', dest='hidden_width', type=int)
    common.add_argument('--n-time', dest='n_time', type=int)
    common.add_argument('--n-test', dest='n_test', type=int)
    common.add_argument('--n-int', dest='n_int', type=int)
    common.add_argument('--basis', choices=['h10_sine', 'h1_fourier'])
    common.add_argument('--fixed-quadrature', dest='fixed_quadrature', action='store_true', default=None)
    common.add_argument('--resample-quadrature', dest='fixed_quadrature', action='store_false', default=None)
    common.add_argument('--normalize-loss', dest='normalize_loss', action='store_true', default=None)
    common.add_argument('--raw-loss', dest='normalize_loss', action='store_false', default=None)
    common.add_argument('--lagged-coefficients', dest='lagged_coefficients', action='store_true', default=None)
    common.add_argument('--no-boundary-flux', dest='boundary_flux', action='store_false', default=None)
    common.add_argument('--properties', help="CSV with columns T,rho,cp,k")
    common.add_argument('--boundary', help="CSV with columns t,T_left,T_right")
    common.add_argument('--data-dir', dest='data_dir')
    common.add_argument('--checkpoint-every', dest='checkpoint_every', type=int)
    common.add_argument('--log-every', dest='log_every', type=int)
    common.add_argument('--residual-dump-every', dest='residual_dump_every', type=int)
    common.add_argument('--snapshot-steps', dest='snapshot_steps',
                        type=lambda s: [int(v) for v in s.split(',') if v.strip()])
    common.add_argument('--picard-tol', dest='picard_tol', type=float)
    common.add_argument('--picard-max', dest='picard_max', type=int)
    common.add_argument('--oracle-cells', dest='oracle_cells', type=int)
    common.add_argument('--oracle-steps', dest='oracle_steps', type=int)
    common.add_argument('--coffee-length', dest='coffee_length_m', type=float)
    common.add_argument('--coffee-duration', dest='coffee_duration_s', type=float)
    common.add_argument('--with-control', dest='with_control', action='store_true', default=None)
    common.add_argument('-v', '--verbose', action='store_true')

    commands = parser.add_subparsers(dest='command', required=True)
    commands.add_parser('train', parents=[common], help="train the network and export artifacts")
    validate = commands.add_parser('validate', parents=[common], help="run the check suite on a checkpoint")
    validate.add_argument('--checkpoint')
    commands.add_parser('oracle', parents=[common], help="run the finite-difference reference solver")
    commands.add_parser('sweep', parents=[common], help="time-step and test-space sweeps")
    runs = commands.add_parser('runs', parents=[common], help="list the run ledger or show one run")
    runs.add_argument('--run-id', dest='run_id', type=int)
    runs.add_argument('--only', choices=['train', 'validate', 'oracle', 'sweep'])
    return parser


NON_CONFIG_ARGS = ('command', 'problem', 'config', 'verbose', 'checkpoint', 'run_id', 'only')


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in NON_CONFIG_ARGS and v is not None}

    try:
        config = build_config(args.problem, args.config, overrides)
    except CONFIG_ERRORS as e:
        logging.basicConfig(level=logging.INFO)
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG

    setup_logging(Path(config.out_dir), args.verbose)
    app = VPINNApplication(config, args.command)
    if args.command == 'runs':
        try:
            return app.cmd_runs(args.run_id, args.only)
        except ConfigError as e:
            logger.error(f"runs failed: {e}")
            app.finish('failed')
            return EXIT_CONFIG
    app.start()
    logger.info(f"Starting {args.command} for '{config.problem}' (config {app.config_hash})")

    try:
        if args.command == 'train':
            return app.cmd_train()
        if args.command == 'validate':
            return app.cmd_validate(args.checkpoint)
        if args.command == 'oracle':
            return app.cmd_oracle()
        return app.cmd_sweep()
    except CONFIG_ERRORS as e:
        logger.error(f"{args.command} failed: {e}")
        app.finish('failed', str(e))
        return EXIT_CONFIG
    except RUNTIME_ERRORS as e:
        logger.error(f"{args.command} did not converge: {e}")
        app.finish('diverged', str(e))
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
