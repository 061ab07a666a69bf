import pytest
from jinja2.exceptions import UndefinedError

from app.template_manager import TemplateManager, format_number


class TestTemplates:
    def test_number_format(self):
        assert format_number(3.14159, 2) == "3.14"
        assert format_number(None) == "n/a"
        assert format_number(float("nan")) == "n/a"

    def test_missing_context_is_an_error(self):
        with pytest.raises(UndefinedError):
            TemplateManager().render_template("report/run_summary.md.j2", {})

    def test_missing_template_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            TemplateManager(tmp_path / "nope")
