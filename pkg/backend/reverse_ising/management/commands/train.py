"""
Train a surrogate model on a generated dataset.

Usage:
    python manage.py train --problem 1 --dataset runs/problem-1/dataset.csv --model forest
    python manage.py train --problem 1 --dataset runs/problem-1/dataset.csv --model mlp --epochs 300
"""
from pathlib import Path

import pandas as pd

from backend.reverse_ising import datagen, surrogate

from ._base import ReverseIsingCommand

MODEL_KINDS = ('forest', 'mlp')


class Command(ReverseIsingCommand):
    help = 'Fit a random forest or an MLP to the training split of a dataset'

    def add_command_arguments(self, parser):
        parser.add_argument('--dataset', required=True, help='Dataset CSV written by datagen')
        parser.add_argument('--model', choices=MODEL_KINDS, default='forest', help='Model kind')
        parser.add_argument('--ratio', type=float, help='Training fraction (default: split_ratio)')
        parser.add_argument('--workers', type=int, default=1, help='Threads for forest training')

    def run(self, config, options):
        ratio = self.split_ratio(config, options)
        dataset = datagen.read_dataset(options['dataset'])
        train_rows, test_rows = datagen.split_dataset(dataset.rows, ratio, config.seed)
        kind = options.get('model') or 'forest'
        self.stdout.write(f'Training {kind} on {len(train_rows)} rows ({len(test_rows)} held back)...')

        if kind == 'forest':
            model = surrogate.train_forest(train_rows, config.trees, config.depth, config.seed,
                                           workers=options.get('workers') or 1)
        else:
            model = surrogate.train_mlp(train_rows, config.layers, config.epochs, config.step_size,
                                        config.batch_size, config.seed)

        default = Path(options['dataset']).with_name(f'{kind}.json')
        path = surrogate.save_model(model, Path(config.out) if config.out else default)
        lines = [f"Model written to {path}",
                 f"  - Training MSE: {surrogate.evaluate_mse(model, train_rows)!r}"]
        if test_rows:
            lines.append(f"  - Test MSE: {surrogate.evaluate_mse(model, test_rows)!r}")
        if kind == 'mlp':
            history = path.with_name(path.name + '.history.csv')
            pd.DataFrame(model.history, columns=['epoch', 'train_loss', 'holdout_loss']).to_csv(
                history, index=False, lineterminator='\n')
            lines.append(f"  - Loss history: {history}")
        self.stdout.write(self.style.SUCCESS('\n'.join(lines)))
