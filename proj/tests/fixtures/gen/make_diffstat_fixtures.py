#!/usr/bin/env python3
"""Regenerates the stored diffs under tests/fixtures/diffs/ and their expected
diffstat counts (expected_counts.json).

Counting rule (the one the library implements and the tests re-derive
independently): within a hunk, a maximal run of removed lines pairs with the
run of added lines that immediately follows it; min(removed, added) counts as
modified, remainders as deleted/added. Context lines break runs.
"""

import json
import random
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "diffs")

C_LINES = [
    "\tstruct perf_event_context *ctx;",
    "\tunsigned long flags;",
    "\tint err = 0;",
    "\tif (!event)",
    "\t\treturn -EINVAL;",
    "\tmutex_lock(&event->mmap_mutex);",
    "\tmutex_unlock(&event->mmap_mutex);",
    "\traw_spin_lock_irqsave(&ctx->lock, flags);",
    "\traw_spin_unlock_irqrestore(&ctx->lock, flags);",
    "\tret = security_perf_event_open(&attr, PERF_SECURITY_OPEN);",
    "\tWARN_ON_ONCE(ctx->parent_ctx);",
    "\tperf_unpin_context(ctx);",
    "\tput_ctx(ctx);",
    "\tatomic_inc(&event->refcount);",
    "\tschedule_work(&event->remove_work);",
    "\tlist_del_init(&event->owner_entry);",
    "\tsmp_store_release(&event->owner, NULL);",
    "\tif (err < 0)",
    "\t\tgoto out;",
    "out:",
    "\treturn err;",
    "}",
    "",
    "static void put_event(struct perf_event *event)",
    "{",
    "\tstruct task_struct *owner;",
    "\tu64 count = local64_read(&event->count);",
    "\tif (ctx->task && ctx->task != current)",
    "\t\tgoto retry;",
    "\tperf_event_ctx_unlock(event, ctx);",
]

PATHS = [
    "kernel/events/core.c", "kernel/events/internal.h", "kernel/fork.c",
    "drivers/media/dvb-frontends/stv0288.c", "drivers/media/dvb-frontends/tda8083.c",
    "fs/posix_acl.c", "fs/ext4/super.c", "net/netlink/af_netlink.c",
    "net/sctp/socket.c", "arch/x86/mm/mmap.c", "arch/arm/mm/mmap.c",
    "security/keys/keyring.c", "mm/mmap.c", "sound/core/seq/seq_clientmgr.c",
    "drivers/scsi/sg.c", "drivers/acpi/custom_method.c", "block/blk-map.c",
    "ipc/shm.c", "kernel/bpf/verifier.c", "crypto/af_alg.c",
]


def c_line(rng):
    return rng.choice(C_LINES)


class HunkBuilder:
    """Builds one hunk and tracks the expected pairing-rule counts."""

    def __init__(self, rng, old_start, new_start):
        self.rng = rng
        self.lines = []
        self.old_count = 0
        self.new_count = 0
        self.old_start = old_start
        self.new_start = new_start
        self.added = 0
        self.deleted = 0
        self.modified = 0
        self._run_removed = 0
        self._run_added = 0

    def _flush(self):
        paired = min(self._run_removed, self._run_added)
        self.modified += paired
        self.deleted += self._run_removed - paired
        self.added += self._run_added - paired
        self._run_removed = self._run_added = 0

    def context(self, n=1):
        self._flush()
        for _ in range(n):
            self.lines.append(" " + c_line(self.rng))
            self.old_count += 1
            self.new_count += 1

    def remove(self, n=1):
        if self._run_added:
            self._flush()
        for _ in range(n):
            self.lines.append("-" + c_line(self.rng))
            self.old_count += 1
            self._run_removed += 1

    def add(self, n=1):
        for _ in range(n):
            self.lines.append("+" + c_line(self.rng))
            self.new_count += 1
            self._run_added += 1

    def render(self):
        self._flush()
        head = "@@ -%d,%d +%d,%d @@" % (self.old_start, self.old_count,
                                        self.new_start, self.new_count)
        return "\n".join([head] + self.lines) + "\n"


def build_file_diff(rng, path, hunk_specs):
    out = ["--- a/%s" % path, "+++ b/%s" % path]
    text = "\n".join(out) + "\n"
    added = deleted = modified = 0
    old_pos = 1
    delta = 0  # cumulative new-side shift
    for spec in hunk_specs:
        old_pos += rng.randint(5, 60)
        h = HunkBuilder(rng, old_pos, old_pos + delta)
        spec(h)
        text += h.render()
        added += h.added
        deleted += h.deleted
        modified += h.modified
        old_pos += h.old_count
        delta += h.new_count - h.old_count
    return text, added, deleted, modified


def random_hunk(rng):
    def spec(h):
        h.context(rng.randint(1, 3))
        for _ in range(rng.randint(1, 4)):
            kind = rng.randint(0, 3)
            if kind == 0:
                h.remove(rng.randint(1, 4))
                h.add(rng.randint(1, 5))  # paired change
            elif kind == 1:
                h.add(rng.randint(1, 6))
            elif kind == 2:
                h.remove(rng.randint(1, 4))
                h.context(1)
            else:
                h.context(rng.randint(1, 2))
        h.context(rng.randint(1, 3))
    return spec


def make_regular(rng, idx):
    nfiles = rng.choice([1, 1, 1, 2, 2, 3])
    paths = rng.sample(PATHS, nfiles)
    text = ""
    totals = [0, 0, 0]
    for p in paths:
        t, a, d, m = build_file_diff(rng, p, [random_hunk(rng) for _ in range(rng.randint(1, 3))])
        text += t
        totals[0] += a
        totals[1] += d
        totals[2] += m
    return text, {"files": nfiles, "added": totals[0], "deleted": totals[1],
                  "modified": totals[2], "bytes": len(text.encode())}


def make_cve_2016_6786(rng):
    # One file; pure-add and pure-delete runs only, separated by context, so
    # added/deleted match the raw +/- counts: 207 added, 37 deleted.
    def big_add(n):
        def spec(h):
            h.context(2)
            h.add(n)
            h.context(2)
        return spec

    def big_del(n):
        def spec(h):
            h.context(2)
            h.remove(n)
            h.context(2)
        return spec

    text, a, d, m = build_file_diff(
        rng, "kernel/events/core.c",
        [big_add(96), big_del(14), big_add(58), big_del(23), big_add(53)])
    assert (a, d, m) == (207, 37, 0), (a, d, m)
    return text, {"files": 1, "added": a, "deleted": d, "modified": m,
                  "bytes": len(text.encode())}


def main():
    rng = random.Random(0x5EC0)
    os.makedirs(OUT, exist_ok=True)
    expected = {}
    for i in range(19):
        name = "kdiff-%02d.diff" % i
        text, counts = make_regular(rng, i)
        with open(os.path.join(OUT, name), "w") as f:
            f.write(text)
        expected[name] = counts
    text, counts = make_cve_2016_6786(rng)
    with open(os.path.join(OUT, "cve-2016-6786.diff"), "w") as f:
        f.write(text)
    expected["cve-2016-6786.diff"] = counts
    with open(os.path.join(OUT, "expected_counts.json"), "w") as f:
        json.dump(expected, f, indent=2, sort_keys=True)
        f.write("\n")
    print("wrote %d diffs" % (len(expected)))


if __name__ == "__main__":
    main()
