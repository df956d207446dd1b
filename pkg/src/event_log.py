# event_log.py

import json
import math
from dataclasses import dataclass
from enum import Enum

from logger import logger
from protocol_types import ProtocolError


class EventLogError(ProtocolError):
    def __init__(self, line_no, detail):
        super().__init__(f"event log line {line_no}: {detail}")
        self.line_no = line_no


class EventKind(str, Enum):
    TASK_CREATED = 'TaskCreated'
    POOL_SELECTED = 'PoolSelected'
    SUBMISSION_RECEIVED = 'SubmissionReceived'
    TASK_EVALUATED = 'TaskEvaluated'
    TASK_DELAYED = 'TaskDelayed'
    TASK_DROPPED = 'TaskDropped'
    SCORES_PUBLISHED = 'ScoresPublished'


PAYLOAD_FIELDS = {
    EventKind.TASK_CREATED: ('round', 'task_id', 'task_type', 'origin', 'model_size_b', 'dataset_size',
                             'n_train', 'n_test', 'n_synth', 'hours_allocated'),
    EventKind.POOL_SELECTED: ('round', 'task_id', 'attempt', 'miner_ids'),
    EventKind.SUBMISSION_RECEIVED: ('round', 'task_id', 'miner_id', 'completed', 'submitted_at', 'losses'),
    EventKind.TASK_EVALUATED: ('round', 'task_id', 'task_weight', 'valid_set', 'outcomes'),
    EventKind.TASK_DELAYED: ('round', 'task_id', 'attempts', 'hours_allocated'),
    EventKind.TASK_DROPPED: ('round', 'task_id', 'attempts', 'reason'),
    EventKind.SCORES_PUBLISHED: ('round', 'day', 'scores'),
}


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value):
    return (isinstance(value, (int, float)) and not isinstance(value, bool)
            and math.isfinite(value))


def _is_str(value):
    return isinstance(value, str)


def _is_bool(value):
    return isinstance(value, bool)


def _is_optional_number(value):
    return value is None or _is_number(value)


def _is_str_list(value):
    return isinstance(value, list) and all(_is_str(item) for item in value)


def _has_fields(*names):
    def check(value):
        return isinstance(value, dict) and all(name in value for name in names)
    return check


def _list_of(check):
    def check_all(value):
        return isinstance(value, list) and all(check(item) for item in value)
    return check_all


def _is_losses(value):
    if value is None:
        return True
    if not isinstance(value, dict):
        return False
    fields = {'text': ('l_test', 'l_synth'), 'image': ('l_text_guided', 'l_no_text')}.get(value.get('kind'))
    return fields is not None and all(_is_number(value.get(name)) for name in fields)


_OUTCOME = _has_fields('miner_id', 'weighted_loss', 'rank', 'duplicate', 'suspicious', 'failed',
                       'task_score', 'adjusted_score')
_SCORE = _has_fields('miner_id', 's_temporal', 'x_normalised', 's_final', 'w_chain')

PAYLOAD_TYPES = {
    EventKind.TASK_CREATED: {
        'round': _is_int, 'task_id': _is_str, 'task_type': _is_str, 'origin': _is_str,
        'model_size_b': _is_number, 'dataset_size': _is_int, 'n_train': _is_int, 'n_test': _is_int,
        'n_synth': _is_int, 'hours_allocated': _is_number,
    },
    EventKind.POOL_SELECTED: {
        'round': _is_int, 'task_id': _is_str, 'attempt': _is_int, 'miner_ids': _is_str_list,
    },
    EventKind.SUBMISSION_RECEIVED: {
        'round': _is_int, 'task_id': _is_str, 'miner_id': _is_str, 'completed': _is_bool,
        'submitted_at': _is_optional_number, 'losses': _is_losses,
    },
    EventKind.TASK_EVALUATED: {
        'round': _is_int, 'task_id': _is_str, 'task_weight': _is_number, 'valid_set': _is_str_list,
        'outcomes': _list_of(_OUTCOME),
    },
    EventKind.TASK_DELAYED: {
        'round': _is_int, 'task_id': _is_str, 'attempts': _is_int, 'hours_allocated': _is_number,
    },
    EventKind.TASK_DROPPED: {
        'round': _is_int, 'task_id': _is_str, 'attempts': _is_int, 'reason': _is_str,
    },
    EventKind.SCORES_PUBLISHED: {
        'round': _is_int, 'day': _is_int, 'scores': _list_of(_SCORE),
    },
}


@dataclass(frozen=True)
class EventRecord:
    seq: int
    sim_time: float
    kind: EventKind
    payload: dict


def _check_payload(kind, payload):
    missing = [name for name in PAYLOAD_FIELDS[kind] if name not in payload]
    if missing:
        raise ProtocolError(f"payload: {kind.value} is missing {', '.join(missing)}")
    extra = sorted(set(payload) - set(PAYLOAD_FIELDS[kind]))
    if extra:
        raise ProtocolError(f"payload: {kind.value} has unexpected {', '.join(extra)}")


def _check_types(kind, payload):
    bad = [name for name, check in PAYLOAD_TYPES[kind].items() if not check(payload[name])]
    if bad:
        raise ProtocolError(f"payload: {kind.value} has malformed {', '.join(bad)}")


def serialise_event(record):
    """One compact JSON line with sorted keys; floats keep full round-trip precision."""
    body = {
        'seq': record.seq,
        'sim_time': record.sim_time,
        'kind': record.kind.value,
        'payload': record.payload,
    }
    return json.dumps(body, sort_keys=True, separators=(',', ':'), allow_nan=False)


def parse_event(line, line_no=1):
    try:
        body = json.loads(line)
    except json.JSONDecodeError as e:
        raise EventLogError(line_no, f"not valid JSON ({e.msg})") from None
    if not isinstance(body, dict) or set(body) != {'seq', 'sim_time', 'kind', 'payload'}:
        raise EventLogError(line_no, "record must have exactly seq, sim_time, kind, payload")
    try:
        kind = EventKind(body['kind'])
    except ValueError:
        raise EventLogError(line_no, f"unknown kind {body['kind']!r}") from None
    seq, sim_time, payload = body['seq'], body['sim_time'], body['payload']
    if not isinstance(seq, int) or isinstance(seq, bool):
        raise EventLogError(line_no, f"seq must be an integer, got {seq!r}")
    if not isinstance(sim_time, (int, float)) or isinstance(sim_time, bool) or not math.isfinite(sim_time):
        raise EventLogError(line_no, f"sim_time must be a finite number, got {sim_time!r}")
    if not isinstance(payload, dict):
        raise EventLogError(line_no, "payload must be an object")
    try:
        _check_payload(kind, payload)
        _check_types(kind, payload)
    except ProtocolError as e:
        raise EventLogError(line_no, str(e)) from None
    return EventRecord(seq=seq, sim_time=float(sim_time), kind=kind, payload=payload)


class EventLog:
    """Single-writer, append-only event sequence."""

    def __init__(self):
        self.records = []

    def emit(self, sim_time, kind, **payload):
        kind = EventKind(kind)
        _check_payload(kind, payload)
        if self.records and sim_time < self.records[-1].sim_time:
            raise ProtocolError(
                f"sim_time: {sim_time} precedes previous event at {self.records[-1].sim_time}")
        record = EventRecord(seq=len(self.records), sim_time=float(sim_time), kind=kind, payload=payload)
        self.records.append(record)
        return record

    def lines(self):
        return [serialise_event(r) for r in self.records]

    def write(self, path):
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            for line in self.lines():
                f.write(line + '\n')
        logger.info(f"Wrote {len(self.records)} events to {path}")


def parse_events(lines):
    """Parse log lines, enforcing strictly increasing seq and non-decreasing sim_time."""
    records = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        record = parse_event(line, line_no)
        if records:
            previous = records[-1]
            if record.seq <= previous.seq:
                raise EventLogError(line_no, f"seq {record.seq} does not follow {previous.seq}")
            if record.sim_time < previous.sim_time:
                raise EventLogError(line_no, f"sim_time {record.sim_time} precedes {previous.sim_time}")
        records.append(record)
    return records


def read_event_log(path):
    with open(path, 'rb') as f:
        raw_lines = f.read().split(b'\n')
    if raw_lines[-1]:
        raise EventLogError(len(raw_lines), "truncated record (missing newline)")

    lines = []
    for line_no, raw in enumerate(raw_lines, start=1):
        try:
            lines.append(raw.decode('utf-8'))
        except UnicodeDecodeError as e:
            raise EventLogError(line_no, f"not valid UTF-8 ({e.reason})") from None
    return parse_events(lines)
