"""Regenerates the frozen trace fixtures for scoring.py.

Every python block in scoring_transcript.json is executed under sys.settrace and
each test_weaver_* function gets one schema-v1 trace in scoring_traces/.
Events carry the post-state of the line: the locals seen at the next line
(or return) event of the same frame, limited to names written on the line.

    python3 make_traces.py
"""
import io
import json
import os
import re
import sys
import tokenize

HERE = os.path.dirname(os.path.abspath(__file__))
SUBJECT = "scoring.py"
MAX_CHARS = 60
MAX_ITEMS = 8


def truncate(s):
    return s if len(s) <= MAX_CHARS else s[:MAX_CHARS] + "…"


def render(v):
    def coll(open_, close, items):
        parts = [p for _, p in zip(range(MAX_ITEMS), items)]
        if len(parts) == MAX_ITEMS and next(items, None) is not None:
            parts.append("…")
        return truncate(open_ + ", ".join(parts) + close)

    if isinstance(v, list):
        return coll("[", "]", (render(x) for x in v))
    if isinstance(v, tuple):
        return coll("(", ")", (render(x) for x in v))
    if isinstance(v, dict):
        return coll("{", "}", (f"{render(k)}: {render(x)}" for k, x in v.items()))
    return truncate(repr(v))


def names_on(line):
    try:
        toks = tokenize.generate_tokens(io.StringIO(line.strip() + "\n").readline)
        return {t.string for t in toks if t.type == tokenize.NAME}
    except (tokenize.TokenError, IndentationError):
        return set()


def trace_test(fn, source_lines, subject_path):
    events, pending = [], {}
    step = [0]

    def flush(frame):
        k, line = pending.pop(frame, (None, None))
        if k is None:
            return
        wanted = names_on(source_lines[line - 1])
        vars_ = {n: render(v) for n, v in frame.f_locals.items() if n in wanted}
        events.append({"k": k, "file": SUBJECT, "line": line, "vars": vars_})

    def local(frame, event, arg):
        if event in ("line", "return"):
            flush(frame)
        if event == "line":
            step[0] += 1
            pending[frame] = (step[0], frame.f_lineno)
        return local

    def glob(frame, event, arg):
        # comprehension and generator frames are folded into their line
        if frame.f_code.co_filename == subject_path and not frame.f_code.co_name.startswith("<"):
            return local
        return None

    outcome = {"status": "passed", "message": ""}
    sys.settrace(glob)
    try:
        fn()
    except AssertionError as e:
        outcome = {"status": "failed", "message": str(e)}
    except Exception as e:  # noqa: BLE001
        outcome = {"status": "error", "message": f"{type(e).__name__}: {e}"}
    finally:
        sys.settrace(None)
    events.sort(key=lambda e: e["k"])
    return outcome, events


def main():
    sys.path.insert(0, HERE)
    subject_path = os.path.join(HERE, SUBJECT)
    import scoring  # noqa: F401  imported before tracing starts

    source_lines = open(subject_path).read().splitlines()
    responses = json.load(open(os.path.join(HERE, "scoring_transcript.json")))
    out_dir = os.path.join(HERE, "scoring_traces")
    os.makedirs(out_dir, exist_ok=True)
    for text in responses:
        for code in re.findall(r"```python\n(.*?)```", text, re.S):
            ns = {}
            exec(compile(code, "<test>", "exec"), ns)
            for name, fn in ns.items():
                if not name.startswith("test_weaver_"):
                    continue
                outcome, events = trace_test(fn, source_lines, subject_path)
                doc = {"v": 1, "test_id": name, "outcome": outcome, "events": events}
                with open(os.path.join(out_dir, name + ".json"), "w") as f:
                    json.dump(doc, f, indent=1, ensure_ascii=False)
                    f.write("\n")
                print(name, outcome["status"], sorted({e["line"] for e in events}))


if __name__ == "__main__":
    main()
