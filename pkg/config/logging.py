import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path

from pythonjsonlogger import jsonlogger

from config.settings import (
    ENABLE_JSON_LOGGING,
    JSON_LOG_FILE,
    LOG_BACKUP_COUNT,
    LOG_DATE_FORMAT,
    LOG_FORMAT,
    LOG_LEVEL,
    LOG_MAX_BYTES,
    LOG_ROTATION_ENABLED,
)

# Поля записи, которые воркеры передают через extra=
RUN_CONTEXT_FIELDS = ('point_id', 'run')
JSON_FIELDS = '%(asctime)s %(name)s %(levelname)s %(point_id)s %(run)s %(message)s'


class RunContextFilter(logging.Filter):
    """Гарантирует поля point_id/run у каждой записи, '-' вне запуска"""

    def filter(self, record: logging.LogRecord) -> bool:
        for field in RUN_CONTEXT_FIELDS:
            if not hasattr(record, field):
                setattr(record, field, '-')
        return True


class ColoredFormatter(logging.Formatter):
    """Цветная консоль: время, эмодзи компонента и уровня, короткое имя"""

    RESET = '\033[0m'
    DIM = '\033[2m'
    LEVELS = {
        'DEBUG': ('\033[36m', '🐛'),
        'INFO': ('\033[32m', '✓'),
        'WARNING': ('\033[33m', '⚠️'),
        'ERROR': ('\033[31m', '❌'),
        'CRITICAL': ('\033[35m', '🔥'),
    }

    # Первое совпадение подстроки в имени логгера
    COMPONENTS = (
        ('actor.RunWorker', '🏃'),
        ('actor.Experiment', '🧪'),
        ('actor_system', '🐍'),
        ('event_store', '📚'),
        ('trainer', '📉'),
        ('outer_solver', '🧮'),
        ('ufd_pde', '🌊'),
        ('metrics', '📏'),
        ('teacher', '🎓'),
        ('artifact_store', '💾'),
        ('harness', '🧭'),
    )
    DEFAULT_COMPONENT = '💎'

    MARKERS = (
        (('starting', 'started'), '✨'),
        (('stopping', 'stopped', 'shutdown'), '💢'),
        (('registered', 'initialized'), '💥'),
        (('error', 'failed'), '☠️ '),
        (('completed', 'converged', 'written'), '🏁'),
    )

    def _component(self, name: str) -> str:
        return next((emoji for key, emoji in self.COMPONENTS if key in name), self.DEFAULT_COMPONENT)

    def _marked(self, msg: str) -> str:
        lowered = msg.lower()
        for words, marker in self.MARKERS:
            if any(word in lowered for word in words):
                return f"{marker} {msg}"
        return msg

    def format(self, record: logging.LogRecord) -> str:
        color, level_emoji = self.LEVELS.get(record.levelname, (self.RESET, ''))
        parts = record.name.split('.')
        short_name = f"{parts[0]}.{parts[-1]}" if len(parts) > 2 else record.name

        msg = self._marked(record.getMessage())
        run = getattr(record, 'run', '-')
        if run != '-':
            msg = f"[{getattr(record, 'point_id', '-')}/run_{run:02d}] {msg}"
        if record.levelno >= logging.ERROR:
            msg = f"{color}{msg}{self.RESET}"
        if record.exc_info:
            msg = f"{msg}\n{self.formatException(record.exc_info)}"

        return (
            f"{self.DIM}{self.formatTime(record, self.datefmt)}{self.RESET} "
            f"{self._component(record.name)} {level_emoji} "
            f"{color}{self.DIM}{record.levelname:8s}{self.RESET} "
            f"{self.DIM}{short_name}{self.RESET} - {msg}"
        )


_logging_configured = False


def _console_handler(level: str) -> logging.Handler:
    # stdout остается за CLI
    handler = logging.StreamHandler(sys.stderr)
    if getattr(sys.stderr, 'isatty', lambda: False)():
        handler.setFormatter(ColoredFormatter(datefmt=LOG_DATE_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATE_FORMAT))
    handler.setLevel(level)
    return handler


def _json_handler(level: str) -> logging.Handler:
    Path(JSON_LOG_FILE).parent.mkdir(parents=True, exist_ok=True)
    if LOG_ROTATION_ENABLED:
        handler = RotatingFileHandler(
            JSON_LOG_FILE, maxBytes=LOG_MAX_BYTES, backupCount=LOG_BACKUP_COUNT, encoding='utf-8'
        )
    else:
        handler = logging.FileHandler(JSON_LOG_FILE, encoding='utf-8')
    handler.setFormatter(jsonlogger.JsonFormatter(JSON_FIELDS, datefmt=LOG_DATE_FORMAT))
    handler.setLevel(level)
    return handler


def setup_logging(level: str = LOG_LEVEL) -> logging.Logger:
    """Один раз на процесс: консоль в stderr и JSON-файл с ротацией"""
    global _logging_configured

    root_logger = logging.getLogger()
    if _logging_configured:
        return root_logger

    handlers = [_console_handler(level)]
    if ENABLE_JSON_LOGGING:
        handlers.append(_json_handler(level))

    context = RunContextFilter()
    root_logger.setLevel(level)
    for handler in handlers:
        handler.addFilter(context)
        root_logger.addHandler(handler)

    logging.getLogger("asyncio").setLevel(logging.WARNING)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)

    for logger_name in logging.root.manager.loggerDict:
        logger = logging.getLogger(logger_name)
        logger.handlers = []
        logger.propagate = True

    _logging_configured = True
    return root_logger


def get_logger(name: str) -> logging.Logger:
    logger = logging.getLogger(name)
    if _logging_configured:
        logger.handlers = []
        logger.propagate = True
        logger.setLevel(LOG_LEVEL)
    return logger


def run_context(point_id: str, run: int) -> dict:
    """extra= для записей, относящихся к одному запуску"""
    return {'point_id': point_id, 'run': run}
