import json

from channels.generic.websocket import AsyncWebsocketConsumer

NOTIFICATION_GROUP = "notification"


class NotificationConsumer(AsyncWebsocketConsumer):
    """Pushes fit progress (started, per generation, done, failed) to clients."""

    async def connect(self):
        await self.accept()
        await self.channel_layer.group_add(NOTIFICATION_GROUP, self.channel_name)

    async def disconnect(self, close_code):
        await self.channel_layer.group_discard(NOTIFICATION_GROUP, self.channel_name)

    async def send_notification(self, event):
        await self.send(text_data=json.dumps({"message": event["message"]}))
