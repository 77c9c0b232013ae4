"""Session multiplexing inside a simulated player.

Every protocol instance (a broadcast, a BA, an AVSS, a gate evaluation) is a
:class:`Session` keyed by a session id. Messages for a session the host has
not created yet are buffered and replayed on creation, which is what lets
protocol instances start in any order under asynchrony.
"""

from __future__ import annotations

from collections import defaultdict

from .simnet import Msg, Process


class Session:
    def __init__(self, host: "Host", sid):
        self.host = host
        self.sid = sid

    def send(self, to: int, tag: str, payload: tuple = ()) -> None:
        self.host.send(to, self.sid, tag, payload)

    def multicast(self, targets, tag: str, payload: tuple = ()) -> None:
        send = self.host.send
        sid = self.sid
        for to in targets:
            send(to, sid, tag, payload)

    def work(self, ops: int) -> None:
        self.host.work(ops)

    def on_message(self, sender: int, tag: str, payload: tuple) -> None:
        raise NotImplementedError


class Host(Process):
    """A process that routes messages to sessions by session id."""

    def __init__(self):
        self.sessions: dict = {}
        self.pending: dict = defaultdict(list)
        self.routers: dict = {}

    def add_session(self, session: Session) -> Session:
        sid = session.sid
        if sid in self.sessions:
            raise KeyError(f"duplicate session {sid!r}")
        self.sessions[sid] = session
        backlog = self.pending.pop(sid, None)
        if backlog:
            for sender, tag, payload in backlog:
                session.on_message(sender, tag, payload)
        return session

    def on_message(self, msg: Msg) -> None:
        s = self.sessions.get(msg.sid)
        if s is not None:
            s.on_message(msg.sender, msg.tag, msg.payload)
            return
        sid = msg.sid
        if type(sid) is tuple and sid:
            route = self.routers.get(sid[0])
            if route is not None:
                route(msg)
                return
        self.pending[sid].append((msg.sender, msg.tag, msg.payload))
