import numpy as np
from pydantic import ValidationError

from .exceptions import ConfigError
from .models import RunConfig

MODE_ALIASES = {
    "rate_vs_n": "rate-vs-n",
    "avg_rates": "avg-rates",
    "averaged": "avg-rates",
    "higher_order": "higher-order",
}


def _float_list(raw):
    return [float(v) for v in raw.split(",") if v.strip()]


def _int_list(raw):
    return [int(v) for v in raw.split(",") if v.strip()]


# -------------------------
# Run configuration form
# -------------------------
class ConfigForm:
    """
    Flat ``key = value`` run configuration, ``#`` starts a comment.

    Mirrors a Django form: ``is_valid()`` fills ``errors`` (one
    line-numbered message per problem) or ``cleaned_data`` (a RunConfig).
    """

    fields = tuple(RunConfig.model_fields) + ("amplitude_range",)

    def __init__(self, text, overrides=None):
        self.text = text or ""
        self.overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
        self.errors = []
        self.cleaned_data = None
        self._lines = {}

    def is_valid(self):
        self.errors = []
        raw = self._read_lines()
        raw.update(self.overrides)
        values = {}
        for key, value in raw.items():
            cleaner = getattr(self, f"clean_{key}", None)
            try:
                values[key] = cleaner(value) if cleaner else value
            except (TypeError, ValueError) as exc:
                self._add_error(key, f"cannot parse {value!r}: {exc}")
        if not self.errors:
            self.clean(values)
        return not self.errors

    # ---- parsing ----
    def _read_lines(self):
        raw = {}
        for lineno, line in enumerate(self.text.splitlines(), start=1):
            content = line.split("#", 1)[0].strip()
            if not content:
                continue
            if "=" not in content:
                self.errors.append(f"line {lineno}: expected 'key = value', got {content!r}")
                continue
            key, value = (part.strip() for part in content.split("=", 1))
            key = key.lower()
            if key not in self.fields:
                self.errors.append(f"line {lineno}: unknown key '{key}'")
                continue
            if key in raw:
                self.errors.append(f"line {lineno}: duplicate key '{key}' (first set on line {self._lines[key]})")
                continue
            raw[key] = value
            self._lines[key] = lineno
        return raw

    def _add_error(self, key, message):
        where = f"line {self._lines[key]}" if key in self._lines else "config"
        self.errors.append(f"{where}: {key}: {message}")

    # ---- field cleaners ----
    def clean_mode(self, value):
        mode = value.strip().lower()
        return MODE_ALIASES.get(mode.replace("-", "_"), mode)

    def clean_omega(self, value):
        if isinstance(value, str) and value.strip().lower() == "resonant":
            return None
        return float(value)

    def clean_amplitudes(self, value):
        return _float_list(value) if isinstance(value, str) else list(value)

    def clean_amplitude_range(self, value):
        parts = _float_list(value)
        if len(parts) != 3 or parts[2] < 1 or parts[2] != int(parts[2]):
            raise ValueError("expected 'start, stop, count'")
        return np.linspace(parts[0], parts[1], int(parts[2])).tolist()

    def clean_levels_list(self, value):
        return _int_list(value) if isinstance(value, str) else list(value)

    def clean_t_mem(self, value):
        return None if str(value).strip().lower() in ("auto", "none", "") else float(value)

    def clean_grid_extent(self, value):
        return None if str(value).strip().lower() in ("auto", "none", "") else float(value)

    # ---- whole-form validation ----
    def clean(self, values):
        if "amplitude_range" in values:
            if "amplitudes" in values:
                self._add_error("amplitude_range", "give either amplitudes or amplitude_range, not both")
                return
            values["amplitudes"] = values.pop("amplitude_range")
        try:
            self.cleaned_data = RunConfig(**values)
        except ValidationError as exc:
            for err in exc.errors():
                key = str(err["loc"][0]) if err["loc"] else "config"
                message = err["msg"].removeprefix("Value error, ")
                if key == "config" or key not in self.fields:
                    self.errors.append(f"config: {message}")
                else:
                    self._add_error(key, message)


def parse_config(text, overrides=None):
    """Validated RunConfig from config text; ConfigError lists every problem."""
    form = ConfigForm(text, overrides)
    if not form.is_valid():
        raise ConfigError(form.errors)
    return form.cleaned_data
