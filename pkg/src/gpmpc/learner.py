"""Online generation of GP training data from consecutive state estimates."""

import warnings
from collections import deque

import numpy as np
from scipy import signal

from . import gp as gpm
from . import model as mdl

FILTER_WINDOW = 20
MIN_TRAIN_POINTS = 10


class ConfigurationError(ValueError):
    pass


class FilterWarning(UserWarning):
    pass


def compute_residual(x_now, x_prev, u_prev, model, row=mdl.IDX_INTRACELLULAR):
    """Insulin-sensitivity disturbance that explains the one-step prediction error.

    Inverts ``x_k = A_d x_{k-1} + B_d u_{k-1} + B_kis_d u_kis_{k-1}`` on the row
    where ``B_kis`` acts and returns ``u_kis_{k-1}``.
    """
    divisor = model.b_kis_d[row, 0]
    if divisor == 0:
        raise ConfigurationError(f"B_kis_d has a zero entry at row {row}")
    predicted = model.a_hat_d[row] @ x_prev + model.b_d[row, 0] * u_prev
    return float((x_now[row] - predicted) / divisor)


def _lowpass(window):
    # cutoff at one cycle per `window` samples, normalized to Nyquist
    return signal.butter(2, 2.0 / window)


def zero_phase_filter(series, window=FILTER_WINDOW):
    """Forward-backward 2nd-order Butterworth low-pass with reflected edges.

    Series shorter than three windows are returned unfiltered with a
    :class:`FilterWarning`.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 3 * window:
        warnings.warn(f"series of length {x.size} too short to filter", FilterWarning,
                      stacklevel=2)
        return x.copy()
    b, a = _lowpass(window)
    return signal.filtfilt(b, a, x, padtype="odd", padlen=min(3 * window, x.size - 1))


class TrainingBuffer:
    """Ring of (time, raw residual) pairs on a regular grid; filtered on demand."""

    def __init__(self, capacity=720, ts=5.0, window=FILTER_WINDOW):
        self.capacity = int(capacity)
        self.ts = float(ts)
        self.window = window
        self._times = deque(maxlen=self.capacity)
        self._raw = deque(maxlen=self.capacity)
        self._filtered = None

    def __len__(self):
        return len(self._times)

    def push(self, t, raw):
        if self._times:
            gap = t - self._times[-1]
            if gap <= 0:
                raise ValueError("buffer times must be strictly increasing")
            if not np.isclose(gap, self.ts):
                raise ValueError(f"buffer times must be spaced {self.ts} apart, got {gap}")
        self._times.append(float(t))
        self._raw.append(float(raw))
        self._filtered = None

    @property
    def times(self):
        return np.fromiter(self._times, float, len(self._times))

    @property
    def raw(self):
        return np.fromiter(self._raw, float, len(self._raw))

    @property
    def filtered(self):
        if self._filtered is None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", FilterWarning)
                self._filtered = zero_phase_filter(self.raw, self.window)
        return self._filtered


def push_and_train(buffer, t, raw_residual, hp, refit_due, init=None, rebuild=True):
    """Append a residual, refilter the buffer and rebuild the GP posterior.

    Returns ``(gp_model, hyperparams)``; the GP is an :class:`~gpmpc.gp.InactiveGp`
    while fewer than ``MIN_TRAIN_POINTS`` samples are buffered. Hyperparameters
    are refit from ``init`` only when ``refit_due``. With ``rebuild=False`` the
    sample is only buffered and the GP stays inactive.
    """
    buffer.push(t, raw_residual)
    if len(buffer) < MIN_TRAIN_POINTS or not rebuild:
        return gpm.InactiveGp(hp), hp
    times, values = buffer.times, buffer.filtered
    if refit_due:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", gpm.GpFitWarning)
            hp = gpm.fit_hyperparams(times, values, init if init is not None else hp)
    return gpm.build_gp(times, values, hp), hp
