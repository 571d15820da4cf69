#!/usr/bin/env python3
"""Regenerate tests/fixtures/diffs: 50 unified diffs over real source files.

Builds a scratch git repository from Python standard-library sources
(permissively licensed), applies seeded scripted edits (line edits, file
adds/deletes, renames, a binary flip), and captures each commit's diff.
Header lines that carry no line-level information (index, modes, similarity)
are dropped so the corpus is in the canonical dialect the renderer emits.

Run from the repo root: python3 scripts/gen_diff_corpus.py
"""

from __future__ import annotations

import random
import re
import shutil
import subprocess
import sysconfig
import tempfile
from pathlib import Path

OUT_DIR = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "diffs"
SEED = 20250810
N_DIFFS = 50

_DROP = re.compile(
    r"^(index |old mode |new mode |new file mode |deleted file mode |"
    r"similarity index |dissimilarity index )"
)

STDLIB_FILES = [
    "argparse.py",
    "ast.py",
    "bisect.py",
    "calendar.py",
    "configparser.py",
    "copy.py",
    "csv.py",
    "dataclasses.py",
    "difflib.py",
    "fnmatch.py",
    "functools.py",
    "getopt.py",
    "glob.py",
    "heapq.py",
    "inspect.py",
    "ipaddress.py",
    "keyword.py",
    "linecache.py",
    "mimetypes.py",
    "netrc.py",
    "optparse.py",
    "pathlib.py",
    "pickle.py",
    "platform.py",
    "queue.py",
    "quopri.py",
    "random.py",
    "secrets.py",
    "shlex.py",
    "shutil.py",
    "statistics.py",
    "string.py",
    "textwrap.py",
    "token.py",
    "traceback.py",
    "types.py",
    "uuid.py",
    "zipfile.py",
]


def git(repo: Path, *args: str) -> str:
    result = subprocess.run(
        ["git", "-C", str(repo), *args], capture_output=True, text=True, check=True
    )
    return result.stdout


def canonicalize(diff: str) -> str:
    kept = [line for line in diff.split("\n") if not _DROP.match(line)]
    return "\n".join(kept)


def mutate_lines(rng: random.Random, lines: list[str]) -> list[str]:
    """Apply 1-4 random line-level edits: replace, delete, insert."""
    out = list(lines)
    for _ in range(rng.randint(1, 4)):
        if not out:
            break
        op = rng.choice(["replace", "delete", "insert", "block"])
        pos = rng.randrange(len(out))
        if op == "replace":
            out[pos] = out[pos] + "  # adjusted"
        elif op == "delete":
            del out[pos : pos + rng.randint(1, 3)]
        elif op == "insert":
            out[pos:pos] = [f"# inserted note {rng.randint(0, 999)}"]
        else:
            block = [f"def _extra_{rng.randint(0, 999)}():", "    return None", ""]
            out[pos:pos] = block
    return out


def main() -> None:
    stdlib = Path(sysconfig.get_paths()["stdlib"])
    sources = [stdlib / name for name in STDLIB_FILES if (stdlib / name).exists()]
    if len(sources) < 20:
        raise SystemExit("not enough stdlib sources found")

    rng = random.Random(SEED)
    tmp = Path(tempfile.mkdtemp(prefix="diffcorpus-"))
    try:
        repo = tmp / "repo"
        repo.mkdir()
        git(repo, "init", "-q")
        git(repo, "config", "user.email", "corpus@example.invalid")
        git(repo, "config", "user.name", "corpus")
        git(repo, "config", "diff.renames", "true")

        tracked: list[str] = []
        for src in sources:
            rel = f"src/{src.name}"
            dest = repo / rel
            dest.parent.mkdir(parents=True, exist_ok=True)
            dest.write_text(src.read_text(encoding="utf-8"), encoding="utf-8")
            tracked.append(rel)
        binary = repo / "assets" / "blob.bin"
        binary.parent.mkdir(parents=True)
        binary.write_bytes(bytes(rng.randrange(256) for _ in range(512)))
        tracked.append("assets/blob.bin")
        git(repo, "add", "-A")
        git(repo, "commit", "-q", "-m", "base")

        OUT_DIR.mkdir(parents=True, exist_ok=True)
        for old in OUT_DIR.glob("*.diff"):
            old.unlink()

        produced = 0
        while produced < N_DIFFS:
            action = rng.choices(
                ["edit", "multi_edit", "add", "delete", "rename", "rename_edit", "binary"],
                weights=[40, 22, 10, 8, 8, 8, 4],
            )[0]
            text_files = [t for t in tracked if t.endswith(".py")]
            if action in ("edit", "multi_edit"):
                count = 1 if action == "edit" else rng.randint(2, 4)
                for rel in rng.sample(text_files, min(count, len(text_files))):
                    path = repo / rel
                    lines = path.read_text(encoding="utf-8").split("\n")
                    path.write_text("\n".join(mutate_lines(rng, lines)), encoding="utf-8")
            elif action == "add":
                rel = f"src/new_module_{produced}.py"
                body = "\n".join(
                    f"VALUE_{i} = {rng.randint(0, 99)}" for i in range(rng.randint(3, 12))
                )
                (repo / rel).write_text(body + "\n", encoding="utf-8")
                tracked.append(rel)
            elif action == "delete":
                victims = [t for t in text_files if t.startswith("src/new_module_")] or text_files
                rel = rng.choice(victims)
                (repo / rel).unlink()
                tracked.remove(rel)
            elif action in ("rename", "rename_edit"):
                rel = rng.choice(text_files)
                new_rel = rel.replace(".py", f"_v{produced}.py")
                (repo / rel).rename(repo / new_rel)
                tracked.remove(rel)
                tracked.append(new_rel)
                if action == "rename_edit":
                    path = repo / new_rel
                    lines = path.read_text(encoding="utf-8").split("\n")
                    if lines:
                        lines[0] = lines[0] + "  # moved"
                    path.write_text("\n".join(lines), encoding="utf-8")
            else:
                binary.write_bytes(bytes(rng.randrange(256) for _ in range(512)))

            git(repo, "add", "-A")
            status = git(repo, "status", "--porcelain")
            if not status.strip():
                continue
            git(repo, "commit", "-q", "-m", f"step {produced}")
            diff = git(repo, "diff", "HEAD~1", "HEAD")
            canonical = canonicalize(diff)
            if not canonical.strip():
                continue
            (OUT_DIR / f"{produced:03d}.diff").write_text(canonical, encoding="utf-8")
            produced += 1
        print(f"wrote {produced} diffs to {OUT_DIR}")
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


if __name__ == "__main__":
    main()
