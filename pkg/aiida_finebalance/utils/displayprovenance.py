#!/usr/bin/env python
"""
Display the matches recorded on the current loaded profile
"""

from aiida import load_profile, orm
from aiida.manage import get_manager


def describe_match(step, node):
    """Plain-text summary of one ``variable_ratio_match`` process node."""
    input_files = []
    output_files = []
    for link in node.base.links.get_incoming().all():
        if isinstance(link.node, orm.SinglefileData):
            input_files.append(f"{link.link_label}: {link.node.filename}")
    manifest = None
    for link in node.base.links.get_outgoing().all():
        if link.link_label == "manifest":
            manifest = link.node.get_dict()
        elif isinstance(link.node, orm.SinglefileData):
            output_files.append(link.node.filename)

    lines = [
        f"\nStep {step}. process {node.pk} ({node.ctime:%Y-%m-%d %H:%M})",
        f"\texit status: {node.exit_status}",
    ]
    if manifest is not None:
        lines.append(f"\tmatched sets: {manifest['n_sets']}, ratios: {manifest['ratio_counts']}")
        lines.append(f"\tdiscarded treated: {manifest['discards']['treated']}, "
                     f"total deviation: {manifest['total_deviation']}")
    inputs_str = '\n\t\t'.join(input_files)
    outputs_str = '\n\t\t'.join(sorted(output_files))
    lines.append(f"\tinput files: \n\t\t{inputs_str}")
    lines.append(f"\toutput files: \n\t\t{outputs_str}")
    return "\n".join(lines)


def show_provenance_text(limit=None):
    """For a given loaded aiida profile, list the recorded matches on the
    CLI as plain text, oldest first
    """
    if get_manager().get_profile() is None:
        load_profile()
    qb = orm.QueryBuilder()
    qb.append(orm.CalcFunctionNode, filters={"attributes.function_name": "variable_ratio_match"},
              tag='process')
    qb.order_by({orm.CalcFunctionNode: {"ctime": "asc"}})
    nodes = qb.all(flat=True)
    if limit is not None:
        nodes = nodes[-limit:] if limit > 0 else []
    for i, node in enumerate(nodes):
        print(describe_match(i + 1, node))
