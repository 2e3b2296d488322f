#!/usr/bin/env python3
"""Regenerates tests/fixtures/statsset/: a 25-instance incomplete-fix corpus
whose Fix-0/Fix-1 aggregate statistics land on the reference values asserted
by tests/acceptance.cpp (population-std convention, tolerance 0.5% per cell).

Each instance is a two-fix chain (Fix-0 and its follow-up). Per-record metric
values are solved as integer multisets matching the target mean/std, then
kernel-flavored diffs are rendered that realize those values exactly under
the run-pairing diffstat rule; byte sizes are met by context padding.
"""

import json
import os
import random

HERE = os.path.dirname(__file__)
OUT = os.path.normpath(os.path.join(HERE, "..", "statsset"))

N = 25

# (sum, population std) per metric; Fix-1 modified has a std target only.
FIX0 = {"files": (58, 3.21), "added": (819, 58.23), "deleted": (276, 24.32),
        "modified": (237, 14.54), "bytes": (79342, 4452.91)}
FIX1 = {"files": (52, 2.27), "added": (655, 49.52), "deleted": (248, 21.61),
        "modified": (92, 3.29), "bytes": (61424, 3992.47)}

# Real incomplete-fix chains; fillers pad the population to 25.
RECORDS = [
    # cve, follow-up cve (associated with Fix-1), year0, interval days,
    # vuln type, phase, sublevel
    ("CVE-2005-4881", "CVE-2009-3612", "2005-06-26", 1564, "information-disclosure", "post_fix_semantic_error", "variable"),
    ("CVE-2008-7159", None, "2008-04-14", 121, "denial-of-service", "pre_fix_misled", None),
    ("CVE-2009-4307", "CVE-2012-2100", "2009-12-01", 861, "denial-of-service", "post_fix_semantic_error", "function"),
    ("CVE-2010-1643", "CVE-2008-7256", "2010-05-12", 96, "denial-of-service", "in_fix_missing_similar", None),
    ("CVE-2010-4163", "CVE-2010-4668", "2010-11-15", 48, "denial-of-service", "post_fix_semantic_error", "function"),
    ("CVE-2010-4250", "CVE-2011-1479", "2010-12-09", 104, "denial-of-service", "post_fix_semantic_error", "resource"),
    ("CVE-2010-4347", "CVE-2011-1021", "2010-12-21", 67, "privilege-escalation", "post_fix_semantic_error", "access_control"),
    ("CVE-2011-1017", "CVE-2011-2182", "2011-02-22", 90, "privilege-escalation", "in_fix_missing_similar", None),
    ("CVE-2011-1083", "CVE-2012-3375", "2011-03-02", 489, "denial-of-service", "post_fix_semantic_error", "resource"),
    ("CVE-2011-4131", "CVE-2012-2375", "2011-11-11", 187, "denial-of-service", "post_fix_semantic_error", "function"),
    ("CVE-2012-2669", "CVE-2012-5532", "2012-05-17", 175, "privilege-escalation", "post_fix_semantic_error", "function"),
    ("CVE-2012-6638", None, "2012-02-03", 58, "denial-of-service", "pre_fix_misled", None),
    ("CVE-2013-4312", "CVE-2016-2550", "2013-12-30", 762, "denial-of-service", "post_fix_semantic_error", "resource"),
    ("CVE-2014-5077", None, "2014-07-23", 0, "denial-of-service", "pre_fix_misled", None),
    ("CVE-2015-6937", "CVE-2015-7990", "2015-09-11", 47, "denial-of-service", "pre_fix_misled", None),
    ("CVE-2015-9289", None, "2015-07-21", 1156, "overflow", "in_fix_missing_similar", None),
    ("CVE-2016-6786", None, "2016-08-12", 152, "privilege-escalation", "pre_fix_misled", None),
    ("CVE-2016-7097", "CVE-2017-5551", "2016-08-29", 142, "privilege-escalation", "in_fix_missing_similar", None),
    ("CVE-2016-9576", "CVE-2016-10088", "2016-12-02", 29, "privilege-escalation", "post_fix_semantic_error", "access_control"),
    ("CVE-2017-5986", "CVE-2017-6353", "2017-02-06", 21, "denial-of-service", "pre_fix_misled", None),
    ("CVE-2017-1000364", None, "2017-06-19", 340, "memory-corruption", "in_fix_missing_similar", None),
    ("CVE-2018-10322", None, "2018-04-24", 66, "denial-of-service", "pre_fix_misled", None),
    ("CVE-2019-14615", "CVE-2020-8832", "2019-11-06", 161, "information-disclosure", "in_fix_missing_similar", None),
    ("CVE-2020-12770", None, "2020-05-09", 83, "information-disclosure", "post_fix_semantic_error", "variable"),
    ("CVE-2021-20292", None, "2021-03-09", 114, "denial-of-service", "pre_fix_misled", None),
]

PIN_FIX0 = {"CVE-2016-6786": {"added": 207, "deleted": 37, "modified": 0, "files": 1}}

PATHS = [
    "kernel/events/core.c", "fs/posix_acl.c", "fs/ext4/resize.c", "mm/mmap.c",
    "net/netlink/af_netlink.c", "net/sctp/socket.c", "fs/ecryptfs/keystore.c",
    "drivers/media/dvb-frontends/stv0288.c", "drivers/scsi/sg.c",
    "drivers/acpi/custom_method.c", "security/keys/keyring.c", "ipc/shm.c",
    "arch/x86/mm/mmap.c", "arch/arm/mm/mmap.c", "fs/nfs/nfs4xdr.c",
    "sound/core/seq/seq_queue.c", "block/blk-map.c", "fs/proc/task_mmu.c",
    "net/tipc/link.c", "drivers/infiniband/core/ucma.c", "kernel/fork.c",
    "drivers/gpu/drm/i915/i915_gem_execbuffer.c", "fs/cifs/file.c",
    "net/ipv6/ip6mr.c", "crypto/af_alg.c", "kernel/bpf/verifier.c",
]

C_LINES = [
    "\tstruct inode *inode = file_inode(file);",
    "\tunsigned long flags;",
    "\tint err = 0;",
    "\tif (!capable(CAP_SYS_ADMIN))",
    "\t\treturn -EPERM;",
    "\tmutex_lock(&dev->lock);",
    "\tmutex_unlock(&dev->lock);",
    "\tspin_lock_irqsave(&q->lock, flags);",
    "\tspin_unlock_irqrestore(&q->lock, flags);",
    "\tif (copy_from_user(buf, ubuf, len))",
    "\t\treturn -EFAULT;",
    "\tWARN_ON_ONCE(!rcu_read_lock_held());",
    "\tkfree(entry);",
    "\tatomic_inc(&sk->sk_refcnt);",
    "\tlist_del_init(&req->list);",
    "\tif (err < 0)",
    "\t\tgoto out_unlock;",
    "out_unlock:",
    "\treturn err;",
    "}",
    "\tsize = min_t(size_t, size, PAGE_SIZE);",
    "\tmemset(&info, 0, sizeof(info));",
]

PAD_LINE = "\t/* reserved for compatibility */"


def ssq_target(n, total, std):
    return n * std * std + total * total / n


def pop_std(xs):
    n = len(xs)
    mean = sum(xs) / n
    return (sum((x - mean) ** 2 for x in xs) / n) ** 0.5


def solve_multiset(rng, n, total, std, lows, pinned):
    """Integer xs, len n, sum == total, population std within 0.35% of target.
    lows[i] <= xs[i]; pinned[i] is not None fixes xs[i]."""
    xs = [pinned[i] if pinned[i] is not None else max(lows[i], 0) for i in range(n)]
    free = [i for i in range(n) if pinned[i] is None]
    assert free, "nothing to solve"
    deficit = total - sum(xs)
    assert deficit >= 0, f"targets infeasible: sum lows {sum(xs)} > {total}"
    # Spread the deficit over free slots.
    for _ in range(deficit):
        xs[rng.choice(free)] += 1

    target = ssq_target(n, total, std)
    # Sigma x^2 parity is pinned by the sum (x^2 == x mod 2), so some targets
    # are reachable only to ~0.4%; the acceptance tolerance is 0.5%.
    tol = 0.0045

    def ok():
        return abs(pop_std(xs) - std) <= std * tol

    cur = sum(x * x for x in xs)
    # Coarse-to-fine sum-preserving transfers j -> i of `step` units.
    for step in (2000, 500, 100, 20, 5, 1):
        for _ in range(120000):
            if ok():
                return xs
            i, j = rng.choice(free), rng.choice(free)
            if i == j or xs[j] - step < lows[j]:
                continue
            new = cur + 2 * step * (xs[i] - xs[j]) + 2 * step * step
            if abs(new - target) < abs(cur - target):
                xs[i] += step
                xs[j] -= step
                cur = new
    assert ok(), f"solver failed: std {pop_std(xs):.4f} vs {std}"
    return xs


class Hunk:
    def __init__(self, rng, old_start, new_start):
        self.rng = rng
        self.old_start, self.new_start = old_start, new_start
        self.lines = []
        self.old_count = self.new_count = 0

    def ctx(self, n=1, text=None):
        for _ in range(n):
            self.lines.append(" " + (text or self.rng.choice(C_LINES)))
            self.old_count += 1
            self.new_count += 1

    def rem(self, n=1):
        for _ in range(n):
            self.lines.append("-" + self.rng.choice(C_LINES))
            self.old_count += 1

    def add(self, n=1):
        for _ in range(n):
            self.lines.append("+" + self.rng.choice(C_LINES))
            self.new_count += 1

    def render(self):
        head = "@@ -%d,%d +%d,%d @@" % (self.old_start, self.old_count,
                                        self.new_start, self.new_count)
        return "\n".join([head] + self.lines) + "\n"


def render_file(rng, path, mods, dels, adds, pad_lines=0, pad_tail=0):
    """One file section: a paired-change hunk, a pure-delete hunk, a
    pure-add hunk (as needed), with `pad_lines` extra context lines and
    `pad_tail` trailing spaces on the last context line."""
    text = "--- a/%s\n+++ b/%s\n" % (path, path)
    old_pos, delta = 1, 0
    chunks = []
    if mods:
        chunks.append(("m", mods))
    if dels:
        chunks.append(("d", dels))
    if adds:
        chunks.append(("a", adds))
    if not chunks:
        chunks.append(("c", 0))  # context-only section for padding carriers
    for idx, (kind, count) in enumerate(chunks):
        old_pos += rng.randint(4, 30)
        h = Hunk(rng, old_pos, old_pos + delta)
        h.ctx(rng.randint(1, 2))
        if kind == "m":
            h.rem(count)
            h.add(count)
        elif kind == "d":
            h.rem(count)
        elif kind == "a":
            h.add(count)
        last = idx == len(chunks) - 1
        if last and pad_lines:
            h.ctx(pad_lines, PAD_LINE)
        h.ctx(rng.randint(1, 2))
        if last and pad_tail:
            h.lines[-1] = h.lines[-1] + " " * pad_tail
        text += h.render()
        old_pos += h.old_count
        delta += h.new_count - h.old_count
    return text


def build_diff(rng, paths, files, adds, dels, mods, byte_target=None):
    """Renders `files` file sections realizing the totals exactly, padding to
    byte_target when given."""
    sel = rng.sample(paths, files)
    # Distribute counts across files, first file takes remainders.
    def split(total):
        if files == 1:
            return [total]
        base = total // files
        out = [base] * files
        out[0] += total - base * files
        return out

    a_per, d_per, m_per = split(adds), split(dels), split(mods)
    # Every file must carry at least one change; steal from file 0 if needed.
    for i in range(files):
        if a_per[i] + d_per[i] + m_per[i] == 0:
            if a_per[0] > 1:
                a_per[0] -= 1
                a_per[i] += 1
            elif d_per[0] > 1:
                d_per[0] -= 1
                d_per[i] += 1
            else:
                m_per[0] -= 1
                m_per[i] += 1

    def render(pad_lines, pad_tail):
        text = ""
        r = random.Random(rng.randint(0, 1 << 30))
        for i in range(files):
            text += render_file(r, sel[i], m_per[i], d_per[i], a_per[i],
                                pad_lines if i == files - 1 else 0,
                                pad_tail if i == files - 1 else 0)
        return text

    state = rng.getstate()
    text = render(0, 0)
    if byte_target is None:
        return text
    base = len(text.encode())
    assert base <= byte_target, f"byte target {byte_target} below minimum {base}"
    unit = len(PAD_LINE) + 2  # " " prefix + newline
    pad_lines = (byte_target - base) // unit
    pad_tail = byte_target - base - pad_lines * unit
    rng.setstate(state)
    text = render(pad_lines, pad_tail)
    assert len(text.encode()) == byte_target, (len(text.encode()), byte_target)
    return text


def add_days(iso, days):
    import datetime
    d = datetime.date.fromisoformat(iso) + datetime.timedelta(days=days)
    return d.isoformat()


def commit_hash(rng):
    return "".join(rng.choice("0123456789abcdef") for _ in range(12))


def main():
    rng = random.Random(0xF1C5)
    os.makedirs(os.path.join(OUT, "diffs"), exist_ok=True)

    ids = [r[0] for r in RECORDS]
    assert len(ids) == N

    def solve_metric(table, key, pin_key):
        total, std = table[key]
        lows = [0] * N
        pinned = [None] * N
        for cve, pins in PIN_FIX0.items() if pin_key == 0 else []:
            pinned[ids.index(cve)] = pins[key]
        if key == "files":
            lows = [1] * N
        return solve_multiset(rng, N, total, std, lows, pinned)

    fix0 = {}
    for key in ("files", "modified", "deleted", "added"):
        fix0[key] = solve_metric(FIX0, key, 0)
    # every file needs a change; bump lows for added where needed
    for i in range(N):
        need = fix0["files"][i] - fix0["deleted"][i] - fix0["modified"][i]
        if fix0["added"][i] < need:
            # borrow from the largest entry
            j = max(range(N), key=lambda k: fix0["added"][k])
            fix0["added"][i], fix0["added"][j] = need, fix0["added"][j] - (need - fix0["added"][i])

    fix1 = {}
    for key in ("files", "modified", "deleted", "added"):
        total, std = FIX1[key]
        lows = [1] * N if key == "files" else [0] * N
        fix1[key] = solve_multiset(rng, N, total, std, lows, [None] * N)

    # Render content once to learn byte floors, then solve byte multisets.
    def floors(fix):
        fl = []
        for i in range(N):
            state = rng.getstate()
            text = build_diff(rng, PATHS, fix["files"][i], fix["added"][i],
                              fix["deleted"][i], fix["modified"][i])
            rng.setstate(state)
            fl.append(len(text.encode()) + 8)
        return fl

    lows0 = floors(fix0)
    lows1 = floors(fix1)
    fix0["bytes"] = solve_multiset(rng, N, FIX0["bytes"][0], FIX0["bytes"][1], lows0,
                                   [None] * N)
    fix1["bytes"] = solve_multiset(rng, N, FIX1["bytes"][0], FIX1["bytes"][1], lows1,
                                   [None] * N)

    manifest_lines = []
    for i, (cve, assoc, date0, interval, vtype, phase, sublevel) in enumerate(RECORDS):
        fixes = []
        for which, fix in (("fix0", fix0), ("fix1", fix1)):
            diff = build_diff(rng, PATHS, fix["files"][i], fix["added"][i],
                              fix["deleted"][i], fix["modified"][i],
                              fix["bytes"][i])
            name = "%s-%s.diff" % (cve, which)
            with open(os.path.join(OUT, "diffs", name), "w") as f:
                f.write(diff)
            touched = []
            for line in diff.splitlines():
                if line.startswith("+++ b/"):
                    touched.append(line[6:])
            entry = {
                "commit_hash": commit_hash(rng),
                "commit_date": date0 if which == "fix0" else add_days(date0, interval),
                "diff_path": "diffs/" + name,
                "touched_files": touched,
            }
            if which == "fix1" and assoc:
                entry["associated_cve"] = assoc
            fixes.append(entry)
        rc = {"phase": phase}
        if sublevel:
            rc["sublevel"] = sublevel
        manifest_lines.append(json.dumps({
            "cve_id": cve,
            "vuln_type": vtype,
            "root_cause": rc,
            "description": "incomplete-fix instance %s" % cve,
            "fixes": fixes,
        }, sort_keys=True))

    with open(os.path.join(OUT, "manifest.jsonl"), "w") as f:
        f.write("\n".join(manifest_lines) + "\n")

    # Self-check the solved statistics.
    for label, fix, table in (("Fix-0", fix0, FIX0), ("Fix-1", fix1, FIX1)):
        for key, (total, std) in table.items():
            got_sum, got_std = sum(fix[key]), pop_std(fix[key])
            print("%s %-9s sum %6d (want %6d)  std %9.2f (want %9.2f)" %
                  (label, key, got_sum, total, got_std, std))
            assert got_sum == total
            assert abs(got_std - std) <= std * 0.0045 + 1e-9


if __name__ == "__main__":
    main()
