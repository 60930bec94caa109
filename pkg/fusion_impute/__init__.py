__author__ = """Oz Tiram"""
__email__ = 'oz.tiram@gmail.com'
__version__ = '0.1.0'
