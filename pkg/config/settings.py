import os
from dotenv import load_dotenv

load_dotenv()


# ========================================
# ЭКСПЕРИМЕНТЫ
# ========================================

# Параметры по умолчанию (полный масштаб)
DEFAULT_STEPSIZE = 2.0 ** -10          # Шаг τ
DEFAULT_N_SAMPLES = 4096               # Число обучающих точек N
DEFAULT_TEACHER_WIDTH = 4096           # Ширина учителя M̄
DEFAULT_WIDTHS = [32, 128, 512, 1024]  # Ширины студента M
DEFAULT_LAMBDAS = [1e-1, 1e-2, 1e-3, 1e-4]
DEFAULT_GAMMAS = [10.0, 100.0, 1000.0]
DEFAULT_GAMMA = 100.0
DEFAULT_ITERS = 4096                   # t = 4 при τ = 2^-10
DEFAULT_EVAL_EVERY = 64
DEFAULT_N_RUNS = 6                     # Усреднение по независимым запускам

# Desk-scale варианты пресетов
MINI_N_SAMPLES = 1024
MINI_TEACHER_WIDTH = 1024
MINI_WIDTHS = [32, 128, 256]
MINI_ITERS = 2048                      # t = 2
MINI_EVAL_EVERY = 32

# Воспроизводимость
BASE_SEED = int(os.getenv("VARPRO_BASE_SEED", "20240101"))
OUTPUT_DIR = os.getenv("VARPRO_OUTPUT_DIR", "artifacts")


# ========================================
# ЧИСЛЕННЫЕ ДОПУСКИ
# ========================================

EPS_SING = 1e-9                  # Порог сингулярности градиента Лапласа
INVERSE_CDF_GRID_SIZE = 16384    # Сетка обратной CDF для π_γ
WEIGHT_SUM_TOLERANCE = 1e-12     # Допуск на сумму весов мод/атомов
MASS_TOLERANCE = 1e-10           # Допуск на массу DensityField

# Двойственный метод Ньютона (PowerR)
NEWTON_MAX_ITERATIONS = 100
NEWTON_TOLERANCE = 1e-10         # ∞-норма градиента двойственной задачи
NEWTON_MAX_HALVINGS = 60
NEWTON_HESSIAN_CAP = 1e12        # Ограничение (f*)'' при r > 2 около нуля
NEWTON_LINE_SEARCH_SLACK = 1e-13  # Допуск округления при сравнении значений двойственной задачи

# Предел λ → 0
ZERO_LIMIT_FEASIBILITY_TOL = 1e-8

# Клиппинг шага частиц: норма шага атома не больше этой доли периода
CLIP_FRACTION = 0.25


# ========================================
# УЛЬТРАБЫСТРАЯ ДИФФУЗИЯ
# ========================================

PDE_N_CELLS = 512
PDE_MIN_CELLS = 16
PDE_EXPONENT = 2.0
PDE_COEFFICIENT = 1.0
PDE_REL_TOL = 1e-8
PDE_ABS_TOL = 1e-10
PDE_POSITIVITY_FLOOR = 1e-12
PDE_METHOD = "BDF"               # "BDF", "Radau" или "LSODA"
PDE_MAX_FLOOR_RESTARTS = 1000


# ========================================
# МЕТРИКИ
# ========================================

KDE_SIGMA = 0.03                 # Ширина ядра для KDE
KDE_WINDOW = 5.0                 # Окно обрезки в единицах σ
MMD_CLAMP_TOLERANCE = 1e-12      # Порог предупреждения при отрицательном MMD²
MMD_IDENTITY_TOLERANCE = 1e-10   # Согласие двух вычислений feature-MMD
# Расхождение feature-MMD: ошибка вместо предупреждения
MMD_STRICT = os.getenv("VARPRO_STRICT_METRICS", "0") == "1"
MMD_ROW_BLOCK = 1024             # Размер блока строк в двойных суммах
DEFAULT_ENERGY_DISTANCE = "chordal"



# ========================================
# BACKEND-НАСТРОЙКИ
# ========================================

# Actor System настройки
ACTOR_SYSTEM_NAME = "varpro"
ACTOR_MESSAGE_QUEUE_SIZE = 1000     # Макс. размер очереди сообщений
ACTOR_SHUTDOWN_TIMEOUT = 5.0        # Секунды
ACTOR_MESSAGE_TIMEOUT = 1.0         # Таймаут ожидания сообщения в message loop

# Retry настройки
ACTOR_MESSAGE_RETRY_ENABLED = True  # Включить retry механизм
ACTOR_MESSAGE_MAX_RETRIES = 3       # Макс. количество попыток
ACTOR_MESSAGE_RETRY_DELAY = 0.1     # Начальная задержка между попытками (сек)
ACTOR_MESSAGE_RETRY_MAX_DELAY = 2.0 # Макс. задержка между попытками (сек)

# Пул воркеров для запусков
RUN_WORKER_COUNT = int(os.getenv("VARPRO_WORKERS", "2"))
RUN_WORKER_THREADS = 1              # Потоков на одного воркера

# Логирование
LOG_LEVEL = os.getenv("VARPRO_LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# JSON логирование
ENABLE_JSON_LOGGING = os.getenv("VARPRO_JSON_LOGGING", "1") == "1"
JSON_LOG_FILE = "logs/varpro.json"  # Путь к файлу JSON логов

# Ротация логов
LOG_ROTATION_ENABLED = True  # Включить ротацию файлов логов
LOG_MAX_BYTES = 1 * 1024 * 1024  # Макс. размер файла логов (1 МБ)
LOG_BACKUP_COUNT = 5  # Количество архивных файлов логов

# Мониторинг
SLOW_OPERATION_THRESHOLD = 0.1  # Порог для медленных операций (секунды)
SLOW_RUN_THRESHOLD = 600.0      # Порог для медленных запусков (секунды)

# Dead Letter Queue настройки
DLQ_MAX_SIZE = 1000  # Старые письма вытесняются новыми

