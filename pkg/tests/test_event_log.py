import json
import os
import tempfile
import unittest

import context  # noqa: F401
from event_log import (
    EventKind, EventLog, EventLogError, parse_event, parse_events, read_event_log, serialise_event
)
from market_sim import SimConfig, run_simulation
from protocol_types import ProtocolError


def small_run(seed=3):
    cfg = SimConfig(n_miners=10, n_rounds=6, tasks_per_round=2, seed=seed, n_unreliable=3,
                    unreliable_failure_rate=0.6)
    return run_simulation(cfg)


class TestEventLog(unittest.TestCase):
    def test_emit_numbers_records_in_order(self):
        log = EventLog()
        log.emit(0.0, EventKind.TASK_DROPPED, round=1, task_id='task-00000', attempts=4, reason='max_retries')
        log.emit(0.0, EventKind.TASK_DELAYED, round=1, task_id='task-00001', attempts=1, hours_allocated=5.0)
        self.assertEqual([r.seq for r in log.records], [0, 1])

    def test_emit_rejects_time_going_backwards(self):
        log = EventLog()
        log.emit(5.0, EventKind.SCORES_PUBLISHED, round=4, day=1, scores=[])
        with self.assertRaises(ProtocolError):
            log.emit(4.0, EventKind.SCORES_PUBLISHED, round=5, day=2, scores=[])

    def test_emit_checks_payload_fields(self):
        with self.assertRaises(ProtocolError):
            EventLog().emit(0.0, EventKind.TASK_DROPPED, round=1, task_id='task-00000')
        with self.assertRaises(ProtocolError):
            EventLog().emit(0.0, EventKind.SCORES_PUBLISHED, round=1, day=1, scores=[], extra=True)

    def test_simulation_log_round_trips(self):
        summary = small_run()
        lines = summary.event_log.lines()
        parsed = parse_events(lines)
        self.assertEqual(parsed, summary.event_log.records)
        self.assertEqual([serialise_event(r) for r in parsed], lines)
        expected_kinds = {EventKind.TASK_CREATED, EventKind.POOL_SELECTED, EventKind.SUBMISSION_RECEIVED,
                          EventKind.TASK_EVALUATED, EventKind.SCORES_PUBLISHED}
        self.assertLessEqual(expected_kinds, {r.kind for r in parsed})

    def test_lines_are_canonical_json(self):
        line = small_run().event_log.lines()[0]
        body = json.loads(line)
        self.assertEqual(json.dumps(body, sort_keys=True, separators=(',', ':')), line)

    def test_write_and_read(self):
        summary = small_run()
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'events.log')
            summary.event_log.write(path)
            self.assertEqual(read_event_log(path), summary.event_log.records)


class TestParseErrors(unittest.TestCase):
    def setUp(self):
        self.lines = small_run().event_log.lines()[:5]

    def test_bad_json_names_line(self):
        lines = list(self.lines)
        lines[2] = lines[2][:-5]
        with self.assertRaises(EventLogError) as ctx:
            parse_events(lines)
        self.assertEqual(ctx.exception.line_no, 3)
        self.assertIn('line 3', str(ctx.exception))

    def test_unknown_kind(self):
        body = json.loads(self.lines[0])
        body['kind'] = 'TaskVanished'
        with self.assertRaises(EventLogError):
            parse_event(json.dumps(body), 1)

    def test_missing_payload_field(self):
        body = json.loads(self.lines[0])
        del body['payload']['task_id']
        with self.assertRaises(EventLogError) as ctx:
            parse_event(json.dumps(body), 7)
        self.assertEqual(ctx.exception.line_no, 7)

    def test_wrong_payload_types(self):
        summary = small_run()
        evaluated = next(r for r in summary.event_log.records if r.kind is EventKind.TASK_EVALUATED)
        cases = (
            ('outcomes', None),
            ('outcomes', [None]),
            ('valid_set', 'miner-000'),
            ('round', '1'),
            ('task_weight', True),
        )
        for field, value in cases:
            with self.subTest(field=field, value=value):
                body = json.loads(serialise_event(evaluated))
                body['payload'][field] = value
                with self.assertRaises(EventLogError) as ctx:
                    parse_event(json.dumps(body), 11)
                self.assertEqual(ctx.exception.line_no, 11)
                self.assertIn(field, str(ctx.exception))

    def test_bad_losses_payload(self):
        body = json.loads(self.lines[0])
        body['kind'] = 'SubmissionReceived'
        body['payload'] = {'round': 1, 'task_id': 'task-00000', 'miner_id': 'miner-000', 'completed': True,
                           'submitted_at': 1.0, 'losses': {'kind': 'text', 'l_test': 0.5}}
        with self.assertRaises(EventLogError):
            parse_event(json.dumps(body), 4)

    def test_invalid_utf8_names_line(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'events.log')
            with open(path, 'wb') as f:
                f.write(('\n'.join(self.lines[:2]) + '\n').encode('utf-8'))
                f.write(b'\xff\xfe\n')
            with self.assertRaises(EventLogError) as ctx:
                read_event_log(path)
            self.assertEqual(ctx.exception.line_no, 3)

    def test_sequence_must_increase(self):
        lines = [self.lines[0], self.lines[0]]
        with self.assertRaises(EventLogError) as ctx:
            parse_events(lines)
        self.assertEqual(ctx.exception.line_no, 2)

    def test_truncated_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'events.log')
            with open(path, 'w', encoding='utf-8') as f:
                f.write('\n'.join(self.lines))
            with self.assertRaises(EventLogError) as ctx:
                read_event_log(path)
            self.assertEqual(ctx.exception.line_no, 5)

    def test_empty_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'events.log')
            open(path, 'w').close()
            self.assertEqual(read_event_log(path), [])


if __name__ == '__main__':
    unittest.main()
