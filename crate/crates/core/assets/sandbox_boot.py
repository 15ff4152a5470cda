"""Runs one script with filesystem, process and network confinement.

usage: boot.py ROOT SCRIPT
"""
import os
import sys

ROOT = os.path.realpath(sys.argv[1])
SCRIPT = os.path.realpath(sys.argv[2])
VIOLATION_EXIT = 97

_read_prefixes = [ROOT, "/usr", "/lib", "/lib64", "/etc", "/proc", "/sys", "/dev"]
for _p in (sys.prefix, sys.base_prefix, sys.exec_prefix):
    _read_prefixes.append(os.path.realpath(_p))
try:
    import site

    for _p in site.getsitepackages():
        _read_prefixes.append(os.path.realpath(_p))
except Exception:
    pass
_write_prefixes = [ROOT]
_write_exact = {"/dev/null"}
_allowed_exec = {"fc-list"}

_WRITE_FLAGS = os.O_WRONLY | os.O_RDWR | os.O_CREAT | os.O_APPEND | os.O_TRUNC


def _violate(what):
    try:
        os.write(2, ("SANDBOX_VIOLATION: %s\n" % what).encode("utf-8", "replace"))
    finally:
        os._exit(VIOLATION_EXIT)


def _resolve(path):
    if isinstance(path, int):
        return None
    if isinstance(path, bytes):
        path = path.decode("utf-8", "surrogateescape")
    path = os.fspath(path)
    return os.path.realpath(os.path.join(os.getcwd(), path))


def _under(path, prefixes):
    return any(path == p or path.startswith(p.rstrip("/") + "/") for p in prefixes)


def _check_write(path, event):
    full = _resolve(path)
    if full is None or full in _write_exact:
        return
    if not _under(full, _write_prefixes):
        _violate("%s outside working directory: %s" % (event, full))


def _check_read(path, event):
    full = _resolve(path)
    if full is None:
        return
    if not _under(full, _read_prefixes):
        _violate("%s outside working directory: %s" % (event, full))


def _is_write(mode, flags):
    if isinstance(mode, str) and any(c in mode for c in "wax+"):
        return True
    return isinstance(flags, int) and bool(flags & _WRITE_FLAGS)


def _hook(event, args):
    if event == "open":
        path, mode, flags = (tuple(args) + (None, None, None))[:3]
        if _is_write(mode, flags):
            _check_write(path, event)
        else:
            _check_read(path, event)
    elif event in ("os.remove", "os.rmdir", "os.mkdir", "os.truncate", "os.chmod",
                   "os.chown", "os.utime", "shutil.rmtree", "os.chflags"):
        _check_write(args[0], event)
    elif event in ("os.rename", "os.link", "os.symlink", "shutil.copyfile", "shutil.move"):
        _check_write(args[0], event)
        _check_write(args[1], event)
    elif event in ("os.listdir", "os.scandir", "glob.glob"):
        if args and args[0] not in (None, "", b""):
            _check_read(args[0], event)
    elif event == "os.chdir":
        _check_write(args[0], event)
    elif event in ("subprocess.Popen", "os.posix_spawn"):
        exe = args[0]
        name = os.path.basename(os.fsdecode(exe)) if exe is not None else ""
        if name not in _allowed_exec:
            _violate("process spawn blocked: %r" % (exe,))
    elif event in ("os.system", "os.exec", "os.spawn", "os.fork", "os.forkpty", "pty.spawn"):
        _violate("process spawn blocked: %s" % event)
    elif event in ("socket.connect", "socket.sendto", "socket.bind", "socket.getaddrinfo"):
        _violate("network access blocked: %s" % event)


def main():
    import runpy

    os.chdir(ROOT)
    sys.argv = [SCRIPT]
    sys.path[0] = ROOT
    sys.addaudithook(_hook)
    runpy.run_path(SCRIPT, run_name="__main__")


main()
