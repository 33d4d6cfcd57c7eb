# provider package: file readers and writers
from . import csv_provider
from . import preset_provider
