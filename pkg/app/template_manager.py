# app/template_manager.py
import logging
import math
from pathlib import Path
from typing import Any, Dict, Union

from jinja2 import Environment, FileSystemLoader, StrictUndefined, select_autoescape

logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).resolve().parent.parent
DEFAULT_TEMPLATE_DIR = PROJECT_ROOT / "templates"


def format_number(value, digits: int = 1, missing: str = "n/a") -> str:
    """Fixed-point formatting that tolerates None and NaN."""
    if value is None:
        return missing
    try:
        number = float(value)
    except (TypeError, ValueError):
        return str(value)
    if math.isnan(number):
        return missing
    return f"{number:.{digits}f}"


class TemplateManager:
    def __init__(self, template_dir: Union[str, Path] = DEFAULT_TEMPLATE_DIR):
        """
        Initializes the Jinja2 environment.

        Args:
            template_dir (Union[str, Path]): The path to the directory containing Jinja2 templates.
        """
        if not Path(template_dir).is_dir():
            raise FileNotFoundError(f"Template directory not found or is not a directory: {template_dir}")

        self.env = Environment(
            loader=FileSystemLoader(str(template_dir)),
            autoescape=select_autoescape(['html', 'xml']),
            undefined=StrictUndefined,  # Raise errors for undefined variables in templates
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
        )
        self.env.filters['num'] = format_number
        logger.debug("Jinja2 environment initialized with template directory: %s", template_dir)

    def render_template(self, template_name: str, context: Dict[str, Any]) -> str:
        """
        Renders a specified template with the given context.

        Args:
            template_name (str): The name of the template file (e.g., "report/run_summary.md.j2").
            context (Dict[str, Any]): A dictionary containing data to pass to the template.

        Returns:
            str: The rendered content as a string.

        Raises:
            jinja2.exceptions.TemplateNotFound: If the template cannot be found.
            jinja2.exceptions.UndefinedError: If a variable used in the template is not in the context.
        """
        try:
            return self.env.get_template(template_name).render(context)
        except Exception as e:
            logger.error("Error rendering template '%s': %s", template_name, e)
            raise
