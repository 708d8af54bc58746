"""
Reading IDX digits and event streams
====================================

Write small files in both formats, read them back and turn them into
[T, C, H, W] input frames.
"""

import tempfile
from pathlib import Path

import numpy as np

from dalif.data import (
    EventFormatError, EventRecord, bin_event_counts, bin_events, encode_events, encode_static,
    load_event_file, load_idx, parse_events, write_events, write_idx,
)

tmp = Path(tempfile.mkdtemp())
rng = np.random.default_rng(0)

write_idx(tmp / "images", rng.integers(0, 256, (3, 4, 4)).astype(np.uint8))
write_idx(tmp / "labels", np.array([1, 0, 2], dtype=np.uint8))
samples = load_idx(tmp / "images", tmp / "labels")
img, label = samples[0]
print("idx sample", img.shape, "label", label, "max", img.max().round(3))
print("static coding over 4 steps:", encode_static(img, 4).shape)

events = [EventRecord(0, 0, 0, 1), EventRecord(30, 1, 2, 0), EventRecord(31, 1, 2, 0),
          EventRecord(99, 3, 3, 1)]
write_events(tmp / "clip.evs", events, width=4, height=4)
clip = load_event_file(tmp / "clip.evs")
print("events read back:", clip.events == events, (clip.width, clip.height))

counts = bin_event_counts(clip.events, 4, 4, 4, 100)
frames = bin_events(clip.events, 4, 4, 4, 100)
print("events per bin:", counts.sum(axis=(1, 2, 3)), "binary frames per bin:",
      frames.sum(axis=(1, 2, 3)))

# out-of-order timestamps are reported with the record index
try:
    parse_events(encode_events(events[::-1], 4, 4))
except EventFormatError as err:
    print("rejected:", err)
