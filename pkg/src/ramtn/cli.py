"""Command-line interface.

Exit codes: 0 success; 1 a session started but failed or refused;
2 invalid input or usage; 3 replay divergence.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from ramtn.backends import (
    Backend,
    BackendError,
    RecordingBackend,
    RemoteBackend,
    RemoteConfig,
    ScriptedBackend,
    load_bundled_fixture,
)
from ramtn.cogpack import (
    FrameworkPackage,
    LibraryError,
    TaskContext,
    bundled_dir,
    library_list,
    library_load,
    library_store,
    package_filename,
    serialize_package,
    try_parse_package,
    validate_package,
)
from ramtn.engine import (
    AbortSession,
    AdaptabilityMismatch,
    ConfigError,
    EngineError,
    ExtractionFailed,
    PendingInput,
    ReplayDivergence,
    SessionConfig,
    SessionError,
    outcome_document,
    replay as replay_transcript,
    run_enhancement,
    run_extraction,
)
from ramtn.transcript import TRANSCRIPT_SUFFIX, MalformedTranscript, SessionTranscript
from ramtn.version import __version__

EXIT_OK = 0
EXIT_SESSION = 1
EXIT_INVALID = 2
EXIT_DIVERGENCE = 3

DEFAULT_LIBRARY = "frameworks"
DEFAULT_TRANSCRIPT_DIR = "transcripts"


class CliFailure(click.ClickException):
    """A failure with a chosen process exit code."""

    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.exit_code = code


def _fail(message: str, code: int) -> CliFailure:
    return CliFailure(message, code)


# =============================================================================
# Backend references
# =============================================================================


def resolve_backend(spec: str, record: str | None = None) -> Backend:
    """scripted:FILE | scripted-lenient:FILE | bundled:NAME | remote:URL,MODEL[,TOKEN_VAR]"""
    scheme, _, rest = spec.partition(":")
    try:
        if scheme == "scripted" and rest:
            backend: Backend = ScriptedBackend.from_file(rest)
        elif scheme == "scripted-lenient" and rest:
            backend = ScriptedBackend.from_file(rest, strict=False)
        elif scheme == "bundled" and rest:
            backend = load_bundled_fixture(rest)
        elif scheme == "remote" and rest:
            parts = [p.strip() for p in rest.split(",")]
            if len(parts) < 2 or not all(parts[:2]):
                raise _fail("remote backend needs remote:URL,MODEL[,TOKEN_VAR]", EXIT_INVALID)
            extra = {"token_variable": parts[2]} if len(parts) > 2 and parts[2] else {}
            backend = RemoteBackend(RemoteConfig(base_url=parts[0], model=parts[1], **extra))
        else:
            raise _fail(
                f"unknown backend {spec!r}; use scripted:FILE, scripted-lenient:FILE, "
                "bundled:NAME, or remote:URL,MODEL[,TOKEN_VAR]",
                EXIT_INVALID,
            )
    except FileNotFoundError as err:
        raise _fail(f"backend fixture not found: {err.filename}", EXIT_INVALID)
    except BackendError as err:
        raise _fail(str(err), EXIT_INVALID)
    if record:
        try:
            backend = RecordingBackend(backend, record)
        except BackendError as err:
            raise _fail(str(err), EXIT_INVALID)
    return backend


def load_package_ref(ref: str, library: str) -> FrameworkPackage:
    """id or id@version, looked up in the library and then the bundled set."""
    package_id, _, version = ref.partition("@")
    if not package_id:
        raise _fail(f"bad package reference {ref!r}; expected id or id@version", EXIT_INVALID)
    for directory in (Path(library), bundled_dir()):
        if not directory.is_dir():
            continue
        try:
            return library_load(directory, package_id, version or None)
        except LibraryError:
            continue
    raise _fail(f"package {ref!r} not found in {library} or the bundled set", EXIT_INVALID)


def _read_text(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise _fail(f"cannot read {what} {path}: {err.strerror}", EXIT_INVALID)


def save_transcript(transcript: SessionTranscript, directory: str) -> Path:
    out_dir = Path(directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{transcript.session_id}{TRANSCRIPT_SUFFIX}"
    transcript.save(path)
    return path


def _run_session(runner, config: SessionConfig, backend: Backend, transcript_dir: str, **kwargs):
    """Run, always leaving a transcript on disk when one exists."""
    try:
        return runner(config, backend, **kwargs)
    except (SessionError, ExtractionFailed) as err:
        transcript = getattr(err, "transcript", None) or getattr(
            getattr(err, "outcome", None), "transcript", None
        )
        if transcript is not None and transcript.events:
            path = save_transcript(transcript, transcript_dir)
            raise _fail(
                f"session {transcript.session_id} failed: {err}\ntranscript: {path}", EXIT_SESSION
            )
        raise _fail(str(err), EXIT_SESSION)
    except AdaptabilityMismatch as err:
        raise _fail(str(err), EXIT_SESSION)
    except ConfigError as err:
        raise _fail(str(err), EXIT_INVALID)


def stdin_channel(pending: PendingInput) -> str:
    click.echo(
        f"[L{pending.layer} R{pending.round}] {pending.statement_id} "
        f"({pending.statement_class}) challenged, {pending.category}: {pending.reason}"
    )
    click.echo(f"  statement: {pending.statement_text}")
    try:
        return click.prompt("response", default="", show_default=False)
    except (click.Abort, EOFError):
        raise AbortSession("input closed")


# =============================================================================
# Commands
# =============================================================================


@click.group()
@click.version_option(__version__, prog_name="ramtn")
def main():
    """Adversarial meta-thinking sessions over portable cognitive frameworks."""


@main.command()
@click.option("--source", type=str, default=None, help="Dialogue or notes file to mine.")
@click.option("--interactive", is_flag=True, help="Answer objections yourself on stdin.")
@click.option("--backend", "backend_spec", required=True, help="Backend reference.")
@click.option("--seed-package", default=None, help="Existing package to grow from (id[@version]).")
@click.option("--out", type=str, default=None, help="Write the extracted package here.")
@click.option("--library", default=DEFAULT_LIBRARY, show_default=True)
@click.option("--transcript-dir", default=DEFAULT_TRANSCRIPT_DIR, show_default=True)
@click.option("--record", default=None, help="Record raw backend replies to this fixture file.")
@click.option("--label", default=None, help="Explicit session label.")
def extract(source, interactive, backend_spec, seed_package, out, library, transcript_dir, record, label):
    """Mine a framework package from a dialogue or from an expert at the keyboard."""
    if bool(source) == bool(interactive):
        raise _fail("pass exactly one of --source FILE or --interactive", EXIT_INVALID)
    problem = _read_text(source, "source") if source else click.prompt("describe the material")
    seed = load_package_ref(seed_package, library) if seed_package else None
    backend = resolve_backend(backend_spec, record)
    try:
        config = SessionConfig(
            mode="extraction",
            problem=problem,
            package=seed,
            interactive=interactive,
            session_label=label,
        )
    except ConfigError as err:
        raise _fail(str(err), EXIT_INVALID)

    outcome = _run_session(
        run_extraction,
        config,
        backend,
        transcript_dir,
        channel=stdin_channel if interactive else None,
    )
    path = save_transcript(outcome.transcript, transcript_dir)

    result = outcome.result
    if result.package is None:
        raise _fail(
            f"session {outcome.session_id} ended ({outcome.reason}) without a package\n"
            f"transcript: {path}",
            EXIT_SESSION,
        )
    if out:
        Path(out).write_bytes(serialize_package(result.package))
    meta = result.package.meta
    click.echo(f"extracted {meta.id}@{meta.version} from session {outcome.session_id}")
    click.echo(
        f"principles: {len(result.package.principles)}  "
        f"templates: {len(result.package.question_templates)}  "
        f"constraints: {len(result.package.constraints)}  "
        f"dropped: {len(result.dropped)}"
    )
    if out:
        click.echo(f"package: {out}")
    click.echo(f"transcript: {path}")


@main.command()
@click.option("--package", "package_ref", required=True, help="Package id[@version].")
@click.option("--problem", "problem_file", required=True, type=str, help="Problem statement file.")
@click.option("--backend", "backend_spec", required=True, help="Backend reference.")
@click.option("--out", type=str, default=None, help="Write the machine-readable result here.")
@click.option("--force", is_flag=True, help="Run even when the package declares no fit.")
@click.option("--keyword", multiple=True, help="Task context keyword (repeatable).")
@click.option("--resource", multiple=True, help="Available resource (repeatable).")
@click.option("--library", default=DEFAULT_LIBRARY, show_default=True)
@click.option("--transcript-dir", default=DEFAULT_TRANSCRIPT_DIR, show_default=True)
@click.option("--record", default=None, help="Record raw backend replies to this fixture file.")
@click.option("--label", default=None, help="Explicit session label.")
def enhance(package_ref, problem_file, backend_spec, out, force, keyword, resource, library, transcript_dir, record, label):
    """Work a problem under a framework package's discipline."""
    pkg = load_package_ref(package_ref, library)
    problem = _read_text(problem_file, "problem")
    backend = resolve_backend(backend_spec, record)
    context = (
        TaskContext(keywords=tuple(keyword), resources=tuple(resource))
        if keyword or resource
        else None
    )
    try:
        config = SessionConfig(
            mode="enhancement",
            problem=problem,
            package=pkg,
            context=context,
            force=force,
            session_label=label,
        )
    except ConfigError as err:
        raise _fail(str(err), EXIT_INVALID)

    outcome = _run_session(run_enhancement, config, backend, transcript_dir)
    path = save_transcript(outcome.transcript, transcript_dir)
    if out:
        Path(out).write_text(
            json.dumps(outcome_document(outcome), ensure_ascii=False, indent=2, sort_keys=True)
            + "\n",
            encoding="utf-8",
        )
    click.echo(outcome.result.rendered)
    click.echo(f"transcript: {path}")
    if not outcome.compliant:
        sys.exit(EXIT_SESSION)


@main.command()
@click.argument("file", type=str)
def validate(file):
    """Check a package document; findings go to stderr, exit 2 when invalid."""
    raw = Path(file).read_bytes() if Path(file).exists() else None
    if raw is None:
        raise _fail(f"no such file: {file}", EXIT_INVALID)
    pkg, findings = try_parse_package(raw)
    if pkg is not None and not findings:
        findings = validate_package(pkg)
    if findings:
        for finding in findings:
            click.echo(f"{finding.path}: {finding.message}", err=True)
        raise _fail(f"{file}: {len(findings)} finding(s)", EXIT_INVALID)
    meta = pkg.meta
    click.echo(f"{file}: valid package {meta.id}@{meta.version}")


@main.command()
@click.argument("transcript_file", type=str)
def replay(transcript_file):
    """Re-execute a recorded session and verify it reproduces bit for bit."""
    if not Path(transcript_file).exists():
        raise _fail(f"no such file: {transcript_file}", EXIT_INVALID)
    try:
        transcript = SessionTranscript.load(transcript_file)
        report = replay_transcript(transcript)
    except MalformedTranscript as err:
        raise _fail(f"malformed transcript: {err}", EXIT_INVALID)
    except ReplayDivergence as err:
        raise _fail(
            f"replay diverged at event {err.sequence} of {transcript_file}", EXIT_DIVERGENCE
        )
    except (ConfigError, EngineError) as err:
        raise _fail(str(err), EXIT_SESSION)
    counts = report.counts or ("-", "-", "-")
    confidence = f"{report.confidence:.4f}" if report.confidence is not None else "-"
    click.echo(
        f"replayed {report.session_id}: {report.events_checked} events verified; "
        f"counts {tuple(counts)}, confidence {confidence}, "
        f"{'compliant' if report.compliant else 'not compliant'}"
    )


@main.group()
def frameworks():
    """Manage the local framework library."""


@frameworks.command("list")
@click.option("--library", default=DEFAULT_LIBRARY, show_default=True)
def frameworks_list(library):
    """List library packages and the bundled set."""
    rows = []
    for origin, directory in (("library", Path(library)), ("bundled", bundled_dir())):
        if not directory.is_dir():
            continue
        listing = library_list(directory)
        rows.extend((meta.id, meta.version, meta.name, origin) for meta in listing.packages)
        for warning in listing.warnings:
            click.echo(f"warning: {warning.path}: {warning.message}", err=True)
    if not rows:
        click.echo("no packages found")
        return
    for package_id, version, name, origin in rows:
        click.echo(f"{package_id}@{version}  [{origin}]  {name}")


@frameworks.command("add")
@click.argument("file", type=str)
@click.option("--library", default=DEFAULT_LIBRARY, show_default=True)
def frameworks_add(file, library):
    """Validate FILE and store it in the library."""
    if not Path(file).exists():
        raise _fail(f"no such file: {file}", EXIT_INVALID)
    pkg, findings = try_parse_package(Path(file).read_bytes())
    if pkg is not None and not findings:
        findings = validate_package(pkg)
    if findings:
        for finding in findings:
            click.echo(f"{finding.path}: {finding.message}", err=True)
        raise _fail(f"{file}: {len(findings)} finding(s); not stored", EXIT_INVALID)
    try:
        target = library_store(library, pkg)
    except LibraryError as err:
        raise _fail(str(err), EXIT_INVALID)
    click.echo(f"stored {pkg.meta.id}@{pkg.meta.version} at {target}")


@frameworks.command("rm")
@click.argument("ref", type=str)
@click.option("--library", default=DEFAULT_LIBRARY, show_default=True)
def frameworks_rm(ref, library):
    """Remove id@version from the library."""
    package_id, _, version = ref.partition("@")
    if not package_id or not version:
        raise _fail(f"bad reference {ref!r}; frameworks rm needs id@version", EXIT_INVALID)
    try:
        pkg = library_load(library, package_id, version)
    except LibraryError as err:
        raise _fail(str(err), EXIT_INVALID)
    target = Path(library) / package_filename(pkg)
    try:
        target.unlink()
    except OSError as err:
        raise _fail(f"cannot remove {target}: {err.strerror}", EXIT_INVALID)
    click.echo(f"removed {package_id}@{version}")


@main.command()
@click.option("--port", default=8420, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--library", default=DEFAULT_LIBRARY, show_default=True)
@click.option("--transcript-dir", default=DEFAULT_TRANSCRIPT_DIR, show_default=True)
@click.option("--token-env", default=None, help="Env var holding the required bearer token.")
def serve(port, host, library, transcript_dir, token_env):
    """Run the HTTP service."""
    import uvicorn

    from ramtn.service import build_app

    token = None
    if token_env:
        token = os.environ.get(token_env)
        if not token:
            raise _fail(f"--token-env names {token_env}, but it is empty or unset", EXIT_INVALID)
    app = build_app(library=library, transcript_dir=transcript_dir, token=token)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
