"""
Predict rho for auxiliary arrays with a saved surrogate model.

Usage:
    python manage.py predict --problem 1 --model-file forest.json --input arrays.csv --out predictions.csv
"""
import pandas as pd

from backend.reverse_ising import datagen, surrogate

from ._base import ReverseIsingCommand


class Command(ReverseIsingCommand):
    help = 'Write rho predictions for the a_* columns of a CSV file'

    def add_command_arguments(self, parser):
        parser.add_argument('--model-file', required=True, help='Model written by train')
        parser.add_argument('--input', required=True, help='CSV with a_1..a_K columns (a dataset works)')

    def run(self, config, options):
        model = surrogate.load_model(options['model_file'])
        features = datagen.read_feature_rows(options['input'])
        predictions = surrogate.predict(model, features)

        path = config.output_path('predictions.csv')
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame({'rho_predicted': predictions}).to_csv(path, index=False, lineterminator='\n')
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(predictions)} predictions to {path}"))
