from .validators import parse_exponent, parse_ladder, validate_exponent, validate_ladder
from .formatters import format_count, format_exponent, report_json, table

__all__ = ['parse_exponent', 'parse_ladder', 'validate_exponent', 'validate_ladder',
           'format_count', 'format_exponent', 'report_json', 'table']
