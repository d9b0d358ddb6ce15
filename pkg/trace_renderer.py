"""
Human-readable decision traces rendered from episode log records.
"""

from typing import Dict, List

from jinja2 import Environment

from errors import MalformedFileError

_TRACE_TEMPLATE = """\
Episode {{ rec.scene_id }}:{{ rec.episode }}  policy={{ rec.policy }}  target={{ rec.target }}
start cell {{ rec.start.cell }} heading {{ rec.start.heading }}
outcome: {{ "SUCCESS" if rec.success else "FAILURE" }} ({{ rec.termination }}) after {{ rec.steps }} steps
path {{ "%.2f"|format(rec.path_length_m) }} m, shortest {{ "%.2f"|format(rec.shortest_length_m) }} m, \
final distance {{ "%.2f"|format(rec.terminal_distance_m) }} m
regions traversed: {{ rec.region_sequence|join(" -> ") }}
{% for d in rec.decisions %}

[{{ loop.index }}] step {{ d.step }} at {{ d.cell }}: {{ d.reason }}
{% if d.visible_objects %}
  visible objects: {{ d.visible_objects|map(attribute="category")|join(", ") }}
{% endif %}
{% for a in d.assignments %}
  - {{ a.category }}#{{ a.object }} candidates [{{ a.candidates|join(", ") }}] -> {{ a.label }}\
{% if a.degenerate %} (no evidence){% endif %}

{% for name, score in top_scores(a.scores) %}
      {{ "%-16s"|format(name) }} {{ "%.4f"|format(score) }}
{% endfor %}
{% endfor %}
{% if d.similarities %}
  similarity to {{ rec.target }}:
{% for name, sim in d.similarities.items() %}
      {{ "%-16s"|format(name) }} {{ "n/a" if sim is none else "%+.4f"|format(sim) }}{% if name == d.chosen_region %}  <- chosen{% endif %}

{% endfor %}
{% endif %}
{% if d.goal_cell %}
  goal cell: {{ d.goal_cell }}
{% endif %}
{% endfor %}
"""


class TraceRenderer:
    """Renders one episode record (as written to the episode log) into text"""

    def __init__(self, region_names: List[str], top: int = 3):
        self.region_names = region_names
        self.top = top
        env = Environment(trim_blocks=True, lstrip_blocks=True, keep_trailing_newline=True)
        env.globals["top_scores"] = self._top_scores
        self.template = env.from_string(_TRACE_TEMPLATE)

    def _top_scores(self, scores: List[float]):
        ranked = sorted(zip(self.region_names, scores), key=lambda item: -item[1])
        return ranked[: self.top]

    def render(self, record: Dict) -> str:
        try:
            return self.template.render(rec=record)
        except (KeyError, TypeError, AttributeError) as e:
            raise MalformedFileError(f"episode record cannot be rendered: {e}") from e
