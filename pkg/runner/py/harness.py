"""Single-test execution harness.

Reads one JSON job from stdin: {"program_source", "test_code", "timeout_s"}
and writes one JSON result to stdout. The parent process spawns a fresh
harness per test, so every test sees a clean namespace.

Line coverage: sys.settrace line events on the program's code objects,
restricted to the executable-line set (statement header lines from the
program AST, docstrings excluded). Reported line ids are the 1-based ranks
of those lines in ascending source order, so ids always fall in
[1..total_lines] no matter how many blank or comment lines the program has.

Branch coverage: probe calls injected into the program AST. Branch points
are the if/while/for statements in (line, column) order; point i owns arm
ids 2*i+1 (body taken) and 2*i+2 (else taken, or loop exhausted without
break). An `elif` is its own branch point.

The timeout uses a real-time interval timer inside this process, so a test
interrupted mid-run still reports the coverage gathered so far. Import and
file-write guards are best effort only; this harness is NOT a security
sandbox and must not be fed adversarial code.
"""
import ast
import builtins
import json
import signal
import sys

PROGRAM_FILE = "__program__.py"
TEST_FILE = "__test__.py"

BLOCKED_IMPORTS = {"socket", "urllib", "http", "requests", "subprocess"}

BRANCH_NODES = (ast.If, ast.While, ast.For, ast.AsyncFor)


class _Timeout(BaseException):
    """Raised by the alarm handler; BaseException so `except Exception`
    in tested code cannot swallow it."""


def executable_lines(tree: ast.Module) -> set:
    """Statement header lines, minus docstring expressions."""
    lines = set()
    docstring_stmts = set()
    for node in ast.walk(tree):
        if isinstance(node, (ast.Module, ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            body = node.body
            if body and isinstance(body[0], ast.Expr) and isinstance(body[0].value, ast.Constant) \
                    and isinstance(body[0].value.value, str):
                docstring_stmts.add(id(body[0]))
    for node in ast.walk(tree):
        if isinstance(node, ast.stmt) and id(node) not in docstring_stmts:
            lines.add(node.lineno)
    return lines


def branch_points(tree: ast.Module) -> list:
    """if/while/for nodes in source order."""
    points = [n for n in ast.walk(tree) if isinstance(n, BRANCH_NODES)]
    points.sort(key=lambda n: (n.lineno, n.col_offset))
    return points


def instrument(tree: ast.Module, points: list) -> ast.Module:
    """Insert __cov_branch__(arm_id) probes at the head of each arm."""

    def probe(node, arm_id):
        call = ast.Expr(
            value=ast.Call(
                func=ast.Name(id="__cov_branch__", ctx=ast.Load()),
                args=[ast.Constant(value=arm_id)],
                keywords=[],
            )
        )
        # pin every probe node to the branch header line so the probe's
        # bytecode never emits line events for lines the test didn't run
        for child in ast.walk(call):
            ast.copy_location(child, node)
        return call

    for i, node in enumerate(points):
        body_id, else_id = 2 * i + 1, 2 * i + 2
        node.body.insert(0, probe(node, body_id))
        node.orelse.insert(0, probe(node, else_id))
    ast.fix_missing_locations(tree)
    return tree


def guarded_builtins():
    """Builtins dict with best-effort import/write guards (not a sandbox)."""
    safe = dict(builtins.__dict__)
    real_import = builtins.__import__
    real_open = builtins.open

    def guarded_import(name, *args, **kwargs):
        if name.split(".")[0] in BLOCKED_IMPORTS:
            raise ImportError(f"import of {name!r} blocked by the coverage runner")
        return real_import(name, *args, **kwargs)

    def guarded_open(file, mode="r", *args, **kwargs):
        if any(ch in str(mode) for ch in "wax+"):
            raise PermissionError("file writes blocked by the coverage runner")
        return real_open(file, mode, *args, **kwargs)

    safe["__import__"] = guarded_import
    safe["open"] = guarded_open
    return safe


def run_job(job: dict) -> dict:
    program_source = job["program_source"]
    test_code = job["test_code"]
    timeout_s = float(job.get("timeout_s", 10.0))

    result = {
        "program_ok": False,
        "diagnostic": None,
        "total_lines": 0,
        "total_branches": 0,
        "syntax_ok": False,
        "exec_ok": False,
        "timed_out": False,
        "covered_lines": [],
        "covered_branches": [],
    }

    try:
        tree = ast.parse(program_source, filename=PROGRAM_FILE)
    except SyntaxError as exc:
        result["diagnostic"] = f"program does not compile: {exc}"
        return result

    exec_lines = executable_lines(tree)
    points = branch_points(tree)
    result["program_ok"] = True
    result["total_lines"] = len(exec_lines)
    result["total_branches"] = 2 * len(points)

    program_code = compile(instrument(tree, points), PROGRAM_FILE, "exec")

    try:
        test_ast = ast.parse(test_code, filename=TEST_FILE)
    except SyntaxError:
        return result  # syntax_ok stays False, no execution, empty coverage
    result["syntax_ok"] = True
    test_compiled = compile(test_ast, TEST_FILE, "exec")

    covered_lines = set()
    covered_branches = set()

    def tracer(frame, event, arg):
        if frame.f_code.co_filename != PROGRAM_FILE:
            return None
        if event == "line" and frame.f_lineno in exec_lines:
            covered_lines.add(frame.f_lineno)
        return tracer

    namespace = {
        "__name__": "__main__",
        "__builtins__": guarded_builtins(),
        "__cov_branch__": covered_branches.add,
    }

    def on_alarm(signum, frame):
        raise _Timeout()

    old_handler = signal.signal(signal.SIGALRM, on_alarm)
    signal.setitimer(signal.ITIMER_REAL, timeout_s)
    sys.settrace(tracer)
    try:
        exec(program_code, namespace)  # the fresh-namespace "import"
        exec(test_compiled, namespace)
        result["exec_ok"] = True
    except _Timeout:
        result["timed_out"] = True
        result["diagnostic"] = f"timed out after {timeout_s}s"
    except BaseException as exc:  # anything the test raises is a failure
        result["diagnostic"] = f"{type(exc).__name__}: {exc}"
    finally:
        sys.settrace(None)
        signal.setitimer(signal.ITIMER_REAL, 0)
        signal.signal(signal.SIGALRM, old_handler)

    rank = {line: i + 1 for i, line in enumerate(sorted(exec_lines))}
    result["covered_lines"] = sorted(rank[line] for line in covered_lines)
    result["covered_branches"] = sorted(covered_branches)
    return result


def main():
    job = json.loads(sys.stdin.read())
    result = run_job(job)
    sys.stdout.write(json.dumps(result))
    sys.stdout.flush()


if __name__ == "__main__":
    main()
