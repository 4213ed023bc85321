# *** imports

# ** core
import tempfile
from pathlib import Path

# ** infra
from tiferet import App, TiferetError


# *** main

# Create new app instance.
app = App()

with tempfile.TemporaryDirectory() as workspace:
    data_dir = Path(workspace) / 'data'
    run_dir = Path(workspace) / 'run'

    # Define the demonstration steps: (label, feature, data).
    steps = [
        ('Generate dataset', 'fan.gen-data', dict(out=str(data_dir), train='32', val='16', test='16', seed='0')),
        ('Train (overfit preset)', 'fan.train', dict(data=str(data_dir), out=str(run_dir), preset='overfit')),
        ('Evaluate on train', 'fan.eval', dict(checkpoint=str(run_dir / 'best.ckpt'), data=str(data_dir), split='train')),
        ('Evaluate on test', 'fan.eval', dict(checkpoint=str(run_dir / 'best.ckpt'), data=str(data_dir), split='test')),
    ]

    # Run each step, stopping at the first failure.
    for label, feature, data in steps:
        print('=' * 60)
        print(label)
        print('=' * 60)
        try:
            result = app.run('fan_runner', feature, data=data)
            print(result)
        except TiferetError as e:
            print(f'Error: {e.message}')
            break
        print()
