"""Small shared helpers used across the app."""

import re
import time

WORD_RE = re.compile(r"\w+")
CHUNK_SIZE = 4096
ELLIPSIS = "..."


def slugify(text):
    lowered = text.lower()
    words = WORD_RE.findall(lowered)
    slug = "-".join(words)
    return slug


def truncate(text, limit):
    if len(text) <= limit:
        return text
    cut = limit - len(ELLIPSIS)
    head = text[:cut]
    return head + ELLIPSIS


def chunked(stream):
    buffer = []
    size = 0
    for piece in stream:
        buffer.append(piece)
        size += len(piece)
        if size >= CHUNK_SIZE:
            yield buffer
            buffer = []
            size = 0
    if buffer:
        yield buffer


class Stopwatch:
    def __init__(self):
        self.started = 0.0
        self.laps = []
        self.running = False

    def start(self):
        self.started = time.monotonic()
        self.running = True

    def lap(self):
        now = time.monotonic()
        elapsed = now - self.started
        self.laps.append(elapsed)
        return elapsed


def summarize_laps(watch):
    count = len(watch.laps)
    if count == 0:
        return {"count": 0}
    fastest = min(watch.laps)
    slowest = max(watch.laps)
    mean = sum(watch.laps) / count
    report = {"count": count, "fastest": fastest, "slowest": slowest, "mean": mean}
    return report
