# services package: computation layer
