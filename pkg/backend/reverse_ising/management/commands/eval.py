"""
Score a saved surrogate model on the test split of a dataset.

Usage:
    python manage.py eval --problem 1 --dataset runs/problem-1/dataset.csv --model-file runs/problem-1/forest.json
"""
from backend.reverse_ising import datagen, surrogate

from ._base import ReverseIsingCommand


class Command(ReverseIsingCommand):
    help = 'Print the mean squared error of a model on the held-out rows of a dataset'

    def add_command_arguments(self, parser):
        parser.add_argument('--dataset', required=True, help='Dataset CSV written by datagen')
        parser.add_argument('--model-file', required=True, help='Model written by train')
        parser.add_argument('--ratio', type=float, help='Training fraction (default: split_ratio)')
        parser.add_argument('--all-rows', action='store_true', help='Score every row, not only the test split')

    def run(self, config, options):
        model = surrogate.load_model(options['model_file'])
        dataset = datagen.read_dataset(options['dataset'])
        if options.get('all_rows'):
            rows = datagen.labelled_rows(dataset.rows)
        else:
            _, rows = datagen.split_dataset(dataset.rows, self.split_ratio(config, options), config.seed)
        mse = surrogate.evaluate_mse(model, rows)
        self.stdout.write(self.style.SUCCESS(f"MSE: {mse!r} ({len(rows)} rows, {model.kind})"))
