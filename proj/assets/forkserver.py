import json
import os
import runpy
import select
import signal
import socket
import sys
import traceback


def exit_code(e):
    if e.code is None:
        return 0
    if isinstance(e.code, int):
        return e.code
    print(e.code, file=sys.stderr)
    return 1


def job(conn):
    reader = conn.makefile('rb')
    req = json.loads(reader.readline())
    os.setsid()
    conn.sendall((json.dumps({'pid': os.getpid()}) + '\n').encode())
    signal.signal(signal.SIGCHLD, signal.SIG_DFL)
    os.chdir(req['cwd'])
    os.environ.clear()
    os.environ.update(req['env'])
    os.dup2(os.open(os.devnull, os.O_RDONLY), 0)
    os.dup2(os.open(req['stdout'], os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600), 1)
    os.dup2(os.open(req['stderr'], os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600), 2)
    sys.argv = list(req['argv'])
    sys.path[0] = req['cwd']
    code = 0
    try:
        runpy.run_path(sys.argv[0], run_name='__main__')
    except SystemExit as e:
        code = exit_code(e)
    except BaseException:
        traceback.print_exc()
        code = 1
    try:
        sys.stdout.flush()
        sys.stderr.flush()
    except Exception:
        pass
    conn.sendall((json.dumps({'exit': code}) + '\n').encode())
    os._exit(code & 0xff)


def main():
    sock_path = sys.argv[1]
    for name in sys.argv[2:]:
        __import__(name)
    server = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
    server.bind(sock_path)
    server.listen(64)
    signal.signal(signal.SIGCHLD, signal.SIG_IGN)
    sys.stdout.write('ready\n')
    sys.stdout.flush()
    while True:
        readable, _, _ = select.select([server, sys.stdin], [], [])
        if sys.stdin in readable and not os.read(sys.stdin.fileno(), 4096):
            return
        if server in readable:
            conn, _ = server.accept()
            if os.fork() == 0:
                server.close()
                job(conn)
            conn.close()


main()
