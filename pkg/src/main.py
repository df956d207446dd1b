# main.py

import argparse
import json
import os
import sys
import tempfile
import time

import pandas as pd

from config import (
    EVENTS_FILE, FINAL_SCORES_FILE, S3_BUCKET, S3_FOLDER, SUMMARY_FILE, load_sim_config
)
from event_log import read_event_log
from logger import attach_cloudwatch, logger
from market_sim import run_simulation
from protocol_types import ProtocolError, ProtocolParams
from report import build_report_tables, write_report
from s3_utils import upload_run_outputs
from scoring_engine import final_score, sigmoid_score

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BAD_INPUT = 2


def _write_run_outputs(summary, out_dir):
    """Write all three run files to a scratch directory, then move them into place."""
    os.makedirs(out_dir, exist_ok=True)
    targets = {
        EVENTS_FILE: os.path.join(out_dir, EVENTS_FILE),
        SUMMARY_FILE: os.path.join(out_dir, SUMMARY_FILE),
        FINAL_SCORES_FILE: os.path.join(out_dir, FINAL_SCORES_FILE),
    }
    with tempfile.TemporaryDirectory(dir=out_dir) as scratch:
        staged = {name: os.path.join(scratch, name) for name in targets}
        summary.event_log.write(staged[EVENTS_FILE])
        with open(staged[SUMMARY_FILE], 'w', encoding='utf-8', newline='\n') as f:
            json.dump(summary.to_dict(), f, indent=2, sort_keys=True, allow_nan=False)
            f.write('\n')
        scores = pd.DataFrame(summary.to_dict()['final_scores'],
                              columns=['miner_id', 's_temporal', 'x_normalised', 's_final', 'w_chain'])
        scores.to_csv(staged[FINAL_SCORES_FILE], index=False, lineterminator='\n')
        for name, target in targets.items():
            os.replace(staged[name], target)
    logger.info(f"Wrote run outputs to {out_dir}")
    return list(targets.values())


def _print_headline(summary):
    data = summary.to_dict()
    tasks = data['tasks']
    print(f"Tasks created: {tasks['created']}, evaluated: {tasks['evaluated']}, dropped: {tasks['dropped']}")
    losses = [r.best_weighted_loss for r in summary.rounds if r.best_weighted_loss is not None]
    if losses:
        print(f"Best weighted loss: first round {losses[0]:.6f}, last round {losses[-1]:.6f}")
    print(f"Duplicates flagged: {sum(r.duplicates for r in summary.rounds)}, "
          f"suspicious flagged: {sum(r.suspicious for r in summary.rounds)}")
    top = sorted(summary.final_report.scores, key=lambda s: (-s.w_chain, s.miner_id))[:5]
    for score in top:
        print(f"  {score.miner_id}: s_final={score.s_final:.6f} w_chain={score.w_chain:.6f}")


def cmd_run(config_path, seed_override=None, out_dir='out', upload=False):
    start_time = time.time()
    cfg = load_sim_config(config_path, seed_override)
    summary = run_simulation(cfg)
    paths = _write_run_outputs(summary, out_dir)
    _print_headline(summary)

    bucket = S3_BUCKET
    if upload or bucket:
        if not bucket:
            logger.warning("Upload requested but GRADIENTS_SIM_S3_BUCKET is not set; skipping")
        else:
            upload_run_outputs(paths, bucket, S3_FOLDER, f"seed-{cfg.seed}")

    logger.info(f"Run finished in {time.time() - start_time:.2f} seconds")
    return EXIT_OK


def cmd_report(events_path, out_dir, parquet=False):
    records = read_event_log(events_path)
    tables = build_report_tables(records)
    write_report(tables, out_dir, parquet=parquet)
    print(f"Report tables from {len(records)} events written to {out_dir}")
    return EXIT_OK


def cmd_score_check(x, p=None):
    p = p or ProtocolParams()
    s_final = final_score(x, p)
    s_sigmoid = sigmoid_score(x, p)
    print(f"x          = {x:.12g}")
    print(f"S_sigmoid  = {s_sigmoid:.12g}")
    print(f"beta*S_sig = {p.beta_sigmoid * s_sigmoid:.12g}")
    print(f"omega*x    = {p.omega_linear * x:.12g}")
    print(f"S_final    = {s_final:.12g}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog='gradients-sim',
                                     description='Competitive fine-tuning marketplace simulator.')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='Run a simulation and write events, summary and final scores')
    run.add_argument('--config', required=True, help='Flat KEY=VALUE config file')
    run.add_argument('--seed', type=int, default=None, help='Override the config seed')
    run.add_argument('--out', required=True, help='Output directory')
    run.add_argument('--upload', action='store_true', help='Upload outputs to S3')

    report = sub.add_parser('report', help='Derive summary tables from an event log')
    report.add_argument('--events', required=True, help='Path to events.log')
    report.add_argument('--out', required=True, help='Output directory for tables')
    report.add_argument('--parquet', action='store_true', help='Also write Parquet tables')

    check = sub.add_parser('score-check', help='Print the final-score breakdown for x in [0, 1]')
    check.add_argument('x', type=float)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    attach_cloudwatch()
    try:
        if args.command == 'run':
            return cmd_run(args.config, args.seed, args.out, args.upload)
        if args.command == 'report':
            return cmd_report(args.events, args.out, args.parquet)
        return cmd_score_check(args.x)
    except (ProtocolError, OSError) as e:
        logger.error(f"{args.command} failed: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except Exception as e:
        logger.error(f"An error occurred: {str(e)}")
        logger.exception("Exception details:")
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
