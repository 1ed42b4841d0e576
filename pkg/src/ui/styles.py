"""Color theme and style constants for terminal output."""

from rich.theme import Theme

DYCP_THEME = Theme({
    "header": "bold white on dark_blue",
    "subheader": "bold cyan",
    "span": "bold bright_cyan",
    "gain.high": "bold green",
    "gain.low": "yellow",
    "elision": "dim white",
    "method": "bold white",
    "method.dycp": "bold bright_green",
    "stat_value": "white",
    "stat_label": "dim",
    "panel_border": "bright_black",
    "warning": "bold yellow",
    "error": "bold red",
    "success": "bold green",
})

METHOD_LABELS = {
    "dycp": "[method.dycp]DyCP[/method.dycp]",
    "full": "[method]Full context[/method]",
    "none": "[method]No context[/method]",
}


def method_label(method: str) -> str:
    if method in METHOD_LABELS:
        return METHOD_LABELS[method]
    kind, _, arg = method.partition(":")
    if kind == "topk":
        return f"[method]Top-{arg}[/method]"
    if kind == "bottom":
        return f"[method]Bottom-{arg}[/method]"
    return f"[method]{method}[/method]"
