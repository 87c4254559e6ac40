"""
In-process actor runtime on asyncio.

Each actor owns a FIFO mailbox and one dispatch task. Handlers are declared
with @handles(MessageType, mode):

  EXCLUSIVE   runs alone: dispatch waits for every in-flight concurrent
              handler to finish, then runs it before taking the next message
  CONCURRENT  started as its own task; may overlap other concurrent handlers

A handler receives (message, envelope) and its return value is the reply.
Returning DEFERRED keeps the request open; the actor answers later through
envelope.respond / envelope.fail. Blocking work goes through
ActorSystem.offload so the event loop never stalls.
"""

import asyncio
import enum
import functools
import inspect
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, Hashable, Mapping, Optional, Set, Tuple

from config import settings
from models.errors import ActorStopped, JoinTimeout, UnhandledMessage, UnknownAddress

logger = logging.getLogger(__name__)

DEFERRED = object()


class HandlerMode(str, enum.Enum):
    EXCLUSIVE = "exclusive"
    CONCURRENT = "concurrent"


@dataclass(frozen=True)
class Shutdown:
    pass


def handles(message_type: type, mode: HandlerMode = HandlerMode.EXCLUSIVE):
    def decorate(fn):
        fn._handles = (message_type, HandlerMode(mode))
        return fn
    return decorate


@dataclass
class Envelope:
    message: Any
    sender: Optional[str]
    correlation_id: int
    reply: Optional[asyncio.Future] = None

    def respond(self, value: Any) -> None:
        if self.reply is not None and not self.reply.done():
            self.reply.set_result(value)

    def fail(self, exc: BaseException) -> None:
        if self.reply is not None and not self.reply.done():
            self.reply.set_exception(exc)
        elif self.reply is None:
            logger.error(f"Unanswerable failure for {type(self.message).__name__} from {self.sender}: {exc}")


class Actor:
    def __init__(self, address: str):
        self.address = address
        self.system: Optional["ActorSystem"] = None
        self.processed = 0
        self._mailbox: asyncio.Queue = asyncio.Queue()
        self._inflight: Set[asyncio.Task] = set()
        self._task: Optional[asyncio.Task] = None
        self._closing = False
        self._handlers: Dict[type, Tuple[Callable, HandlerMode]] = {}
        for name in dir(type(self)):
            spec = getattr(getattr(type(self), name), "_handles", None)
            if spec is not None:
                message_type, mode = spec
                self._handlers[message_type] = (getattr(self, name), mode)

    @property
    def pending(self) -> int:
        return self._mailbox.qsize() + len(self._inflight)

    @property
    def stopped(self) -> bool:
        return self._task is not None and self._task.done()

    def enqueue(self, envelope: Envelope) -> None:
        if self._closing:
            raise ActorStopped(self.address)
        if isinstance(envelope.message, Shutdown):
            self._closing = True
        self._mailbox.put_nowait(envelope)

    def start(self) -> None:
        self._task = asyncio.get_running_loop().create_task(self._dispatch(), name=f"actor:{self.address}")

    async def _drain(self) -> None:
        if self._inflight:
            await asyncio.gather(*list(self._inflight), return_exceptions=True)

    async def _dispatch(self) -> None:
        while True:
            envelope = await self._mailbox.get()
            message = envelope.message
            if isinstance(message, Shutdown):
                await self._drain()
                envelope.respond(None)
                logger.debug(f"Actor {self.address} stopped after {self.processed} messages")
                return

            entry = self._handlers.get(type(message))
            if entry is None:
                logger.warning(f"Actor {self.address} dropped {type(message).__name__}")
                envelope.fail(UnhandledMessage(self.address, type(message).__name__))
                continue

            fn, mode = entry
            if mode is HandlerMode.EXCLUSIVE:
                await self._drain()
                await self._invoke(fn, envelope)
            else:
                task = asyncio.get_running_loop().create_task(self._invoke(fn, envelope))
                self._inflight.add(task)
                task.add_done_callback(self._inflight.discard)

    async def _invoke(self, fn: Callable, envelope: Envelope) -> None:
        try:
            result = fn(envelope.message, envelope)
            if inspect.isawaitable(result):
                result = await result
            if result is not DEFERRED:
                envelope.respond(result)
        except Exception as exc:
            logger.debug(f"Actor {self.address} failed on {type(envelope.message).__name__}: {exc}")
            envelope.fail(exc)
        finally:
            self.processed += 1

    def send(self, to: str, message: Any) -> None:
        self.system.send(to, message, sender=self.address)

    def ask(self, to: str, message: Any) -> asyncio.Future:
        return self.system.ask(to, message, sender=self.address)


class ActorSystem:
    def __init__(self, pool_size: Optional[int] = None):
        self._actors: Dict[str, Actor] = {}
        self._correlation = itertools.count(1)
        self._pool = ThreadPoolExecutor(max_workers=pool_size or settings.actor_pool_size,
                                        thread_name_prefix="actor-worker")

    def spawn(self, actor: Actor) -> str:
        """Register and start an actor. Must be called from a running event loop."""
        if actor.address in self._actors:
            raise ValueError(f"Address {actor.address!r} is already registered")
        actor.system = self
        self._actors[actor.address] = actor
        actor.start()
        return actor.address

    def actor(self, address: str) -> Actor:
        try:
            return self._actors[address]
        except KeyError:
            raise UnknownAddress(address)

    @property
    def addresses(self):
        return list(self._actors)

    def send(self, to: str, message: Any, sender: Optional[str] = None) -> None:
        """Fire and forget; never blocks the sender"""
        self.actor(to).enqueue(Envelope(message, sender, next(self._correlation)))

    def ask(self, to: str, message: Any, sender: Optional[str] = None) -> asyncio.Future:
        """Send a request; the future resolves with exactly one reply or error"""
        target = self.actor(to)
        future = asyncio.get_running_loop().create_future()
        target.enqueue(Envelope(message, sender, next(self._correlation), future))
        return future

    async def join(self, futures: Mapping[Hashable, asyncio.Future], timeout: Optional[float] = None) -> Dict[Hashable, Any]:
        """Wait for a reply on every channel; raise JoinTimeout naming the silent ones"""
        if not futures:
            return {}
        _, pending = await asyncio.wait(list(futures.values()), timeout=timeout)
        if pending:
            silent = [key for key, future in futures.items() if future in pending]
            for future in pending:
                future.cancel()
            raise JoinTimeout(silent, timeout)
        results = {}
        for key, future in futures.items():
            results[key] = future.result()
        return results

    async def offload(self, fn: Callable, *args, **kwargs) -> Any:
        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(self._pool, functools.partial(fn, *args, **kwargs))

    def quiescent(self) -> bool:
        return all(actor.pending == 0 for actor in self._actors.values())

    async def shutdown(self, grace: float = 10.0) -> bool:
        """Stop every actor; True if no message was left behind"""
        replies = []
        for actor in self._actors.values():
            if not actor._closing:
                replies.append(self.ask(actor.address, Shutdown()))
        if replies:
            _, pending = await asyncio.wait(replies, timeout=grace)
            for future in pending:
                future.cancel()
        tasks = [a._task for a in self._actors.values() if a._task is not None and not a._task.done()]
        for task in tasks:
            task.cancel()
        if tasks:
            await asyncio.gather(*tasks, return_exceptions=True)
        quiescent = self.quiescent()
        self._pool.shutdown(wait=True)
        logger.info(f"Actor system stopped ({len(self._actors)} actors, quiescent={quiescent})")
        return quiescent
