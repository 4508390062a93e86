"""CAT derivative indifference pricing package"""
