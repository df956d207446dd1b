# report.py
# Derives plot-ready tables from an event log alone.

import os
from collections import Counter, defaultdict

import pandas as pd

from event_log import EventKind
from logger import logger

PER_ROUND_COLUMNS = ['round', 'sim_time', 'tasks_created', 'tasks_evaluated', 'tasks_delayed',
                     'tasks_dropped', 'best_weighted_loss', 'duplicates', 'suspicious', 'failed_submissions']
FLAG_COLUMNS = ['miner_id', 'credited', 'duplicate', 'suspicious', 'failed']
SCORE_COLUMNS = ['day', 'round', 'miner_id', 's_temporal', 'x_normalised', 's_final', 'w_chain']
SELECTION_COLUMNS = ['miner_id', 'times_selected', 'submissions_completed', 'completion_rate']


def per_round_table(records):
    rows = {}

    def row(round_no, sim_time):
        if round_no not in rows:
            rows[round_no] = {column: 0 for column in PER_ROUND_COLUMNS}
            rows[round_no].update(round=round_no, sim_time=sim_time, best_weighted_loss=None)
        entry = rows[round_no]
        entry['sim_time'] = max(entry['sim_time'], sim_time)
        return entry

    for record in records:
        payload = record.payload
        if record.kind is EventKind.SCORES_PUBLISHED:
            continue
        entry = row(payload['round'], record.sim_time)
        if record.kind is EventKind.TASK_CREATED:
            entry['tasks_created'] += 1
        elif record.kind is EventKind.TASK_DELAYED:
            entry['tasks_delayed'] += 1
        elif record.kind is EventKind.TASK_DROPPED:
            entry['tasks_dropped'] += 1
        elif record.kind is EventKind.SUBMISSION_RECEIVED and not payload['completed']:
            entry['failed_submissions'] += 1
        elif record.kind is EventKind.TASK_EVALUATED:
            entry['tasks_evaluated'] += 1
            for outcome in payload['outcomes']:
                entry['duplicates'] += int(outcome['duplicate'])
                entry['suspicious'] += int(outcome['suspicious'])
                if outcome['rank'] is not None:
                    loss = outcome['weighted_loss']
                    best = entry['best_weighted_loss']
                    entry['best_weighted_loss'] = loss if best is None else min(best, loss)

    ordered = [{column: rows[r][column] for column in PER_ROUND_COLUMNS} for r in sorted(rows)]
    return pd.DataFrame(ordered, columns=PER_ROUND_COLUMNS)


def flag_counts_table(records):
    counts = defaultdict(Counter)
    for record in records:
        payload = record.payload
        if record.kind is EventKind.TASK_EVALUATED:
            for outcome in payload['outcomes']:
                miner = counts[outcome['miner_id']]
                miner['credited'] += int(outcome['rank'] is not None)
                miner['duplicate'] += int(outcome['duplicate'])
                miner['suspicious'] += int(outcome['suspicious'])
        elif record.kind is EventKind.SUBMISSION_RECEIVED and not payload['completed']:
            counts[payload['miner_id']]['failed'] += 1

    rows = [{'miner_id': miner_id, **{c: counts[miner_id][c] for c in FLAG_COLUMNS[1:]}}
            for miner_id in sorted(counts)]
    return pd.DataFrame(rows, columns=FLAG_COLUMNS)


def score_distribution_table(records):
    rows = []
    for record in records:
        if record.kind is not EventKind.SCORES_PUBLISHED:
            continue
        for score in record.payload['scores']:
            rows.append({'day': record.payload['day'], 'round': record.payload['round'],
                         **{c: score[c] for c in SCORE_COLUMNS[2:]}})
    return pd.DataFrame(rows, columns=SCORE_COLUMNS)


def selection_frequency_table(records):
    selected = Counter()
    completed = Counter()
    for record in records:
        if record.kind is EventKind.POOL_SELECTED:
            selected.update(record.payload['miner_ids'])
        elif record.kind is EventKind.SUBMISSION_RECEIVED and record.payload['completed']:
            completed[record.payload['miner_id']] += 1

    rows = [
        {
            'miner_id': miner_id,
            'times_selected': selected[miner_id],
            'submissions_completed': completed[miner_id],
            'completion_rate': completed[miner_id] / selected[miner_id],
        }
        for miner_id in sorted(selected)
    ]
    return pd.DataFrame(rows, columns=SELECTION_COLUMNS)


def build_report_tables(records):
    tables = {
        'per_round': per_round_table(records),
        'flag_counts': flag_counts_table(records),
        'score_distribution': score_distribution_table(records),
        'selection_frequency': selection_frequency_table(records),
    }
    for name, table in tables.items():
        logger.debug(f"Report table {name}: {len(table)} rows")
    return tables


def write_report(tables, out_dir, parquet=False):
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, table in tables.items():
        csv_path = os.path.join(out_dir, f"{name}.csv")
        table.to_csv(csv_path, index=False, lineterminator='\n')
        written.append(csv_path)
        if parquet:
            parquet_path = os.path.join(out_dir, f"{name}.parquet")
            table.to_parquet(parquet_path, engine='pyarrow', index=False)
            written.append(parquet_path)
    logger.info(f"Wrote {len(written)} report files to {out_dir}")
    return written
