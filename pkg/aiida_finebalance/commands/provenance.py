#!/usr/bin/env python
"""
Show text output of the matches recorded in the loaded profile
"""
import click

from aiida_finebalance.utils.displayprovenance import show_provenance_text


@click.group()
def finebalance():
    """commandline help for the finebalance data command
    Help: $ verdi data finebalance --help"""


@finebalance.command('show')
@click.option('--limit', type=int, default=None, help='Only show the most recent LIMIT matches.')
def show_provenance(limit):
    """Print out the variable-ratio matches recorded on the current
    loaded aiida profile

    Help: $ verdi data finebalance show --help"""
    show_provenance_text(limit=limit)
